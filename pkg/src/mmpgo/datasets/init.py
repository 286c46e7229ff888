"""Initial estimates: chordal relaxation, spanning-tree odometry and identity."""

from collections import deque

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .._linalg import project_to_so
from ..graph import GraphError, Poses


def _graph_of(g):
    return getattr(g, "graph", g)


def chordal_initialize(graph):
    """Chordal initialization anchored at pose 0 = ``[0 | I]``.

    Rotations solve the linear least squares ``sum kappa ||R_i R~ - R_j||^2``
    over unconstrained ``d x d`` blocks, are projected onto SO(d), and then
    translations solve ``sum tau ||R_i t~ + t_i - t_j||^2`` with rotations fixed.

    Parameters
    ----------
    graph : PoseGraph or DistributedPoseGraph

    Raises
    ------
    GraphError
        If the graph is disconnected.
    """
    graph = _graph_of(graph)
    graph.check_connected()
    n, d = graph.n, graph.d
    if n == 1:
        return Poses.identity(1, d)
    e = graph.edges
    m = len(e)
    # row r of R_i, as a column x_i: R~^T x_i - x_j = 0, unknowns for i >= 1
    sk = np.sqrt(e.kappa)
    rows, cols, vals = [], [], []
    eq = np.arange(m)[:, None] * d + np.arange(d)[None, :]  # (m, d) equation ids
    for a in range(d):
        for b in range(d):
            rows.append(eq[:, a])
            cols.append(e.i * d + b)
            vals.append(sk * e.R[:, b, a])
    rows.append(eq.ravel())
    cols.append((e.j[:, None] * d + np.arange(d)[None, :]).ravel())
    vals.append(-np.repeat(sk, d))
    rows, cols, vals = (np.concatenate(v) for v in (rows, cols, vals))
    A = coo_matrix((vals, (rows, cols)), shape=(m * d, n * d)).tocsc()
    A_free, A_fix = A[:, d:], A[:, :d]
    # anchor R_0 = I: x_0 for row r is e_r, so the fixed part is A_fix @ e_r
    N = (A_free.T @ A_free).tocsc()
    rhs = -(A_free.T @ A_fix).toarray()  # column r is the right-hand side for row r
    sol = spsolve(N, rhs)
    sol = np.asarray(sol).reshape(n * d - d, d)
    R = np.empty((n, d, d))
    R[0] = np.eye(d)
    R[1:] = sol.reshape(n - 1, d, d).transpose(0, 2, 1)
    R[1:] = project_to_so(R[1:])
    return Poses(_solve_translations(graph, R), R)


def _solve_translations(graph, R):
    n, d = graph.n, graph.d
    e = graph.edges
    # Laplacian system in t with t_0 = 0
    w = e.tau
    L = coo_matrix(
        (np.concatenate([w, w, -w, -w]), (np.concatenate([e.i, e.j, e.i, e.j]), np.concatenate([e.i, e.j, e.j, e.i]))),
        shape=(n, n),
    ).tocsc()
    v = np.einsum("mab,mb->ma", R[e.i], e.t)  # t_j - t_i should equal v
    b = np.zeros((n, d))
    np.add.at(b, e.j, w[:, None] * v)
    np.add.at(b, e.i, -w[:, None] * v)
    t = np.zeros((n, d))
    sol = spsolve(L[1:, 1:], b[1:])
    t[1:] = np.asarray(sol).reshape(n - 1, d)
    return t


def odometry_initialize(graph):
    """Compose measurements along a breadth-first spanning tree from pose 0."""
    graph = _graph_of(graph)
    graph.check_connected()
    n, d = graph.n, graph.d
    e = graph.edges
    adj = [[] for _ in range(n)]
    for k in range(len(e)):
        adj[int(e.i[k])].append((k, True))
        adj[int(e.j[k])].append((k, False))
    t = np.zeros((n, d))
    R = np.zeros((n, d, d))
    R[0] = np.eye(d)
    seen = np.zeros(n, bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for k, forward in adj[u]:
            v = int(e.j[k]) if forward else int(e.i[k])
            if seen[v]:
                continue
            if forward:
                R[v] = R[u] @ e.R[k]
                t[v] = t[u] + R[u] @ e.t[k]
            else:
                R[v] = R[u] @ e.R[k].T
                t[v] = t[u] - R[v] @ e.t[k]
            seen[v] = True
            queue.append(v)
    if not seen.all():
        raise GraphError("pose graph is disconnected")
    return Poses(t, project_to_so(R))


def initialize(graph, how="chordal"):
    """Initial iterate by name: ``chordal``, ``vertices``, ``identity`` or ``odometry``."""
    g = _graph_of(graph)
    if how == "chordal":
        return chordal_initialize(g)
    if how == "vertices":
        if g.initial is None:
            raise GraphError("the input has no vertex estimates")
        return g.initial.copy()
    if how == "identity":
        return Poses.identity(g.n, g.d)
    if how == "odometry":
        return odometry_initialize(g)
    raise ValueError(f"unknown initialization {how!r}")
