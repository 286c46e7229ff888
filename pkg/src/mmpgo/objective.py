"""Objective, edge weights and Euclidean/Riemannian gradients.

All routines are vectorized over edges. Per-pose accumulation uses
``np.add.at``, which processes edges in index order, so results do not depend
on any scheduling and are bitwise reproducible.
"""

import numpy as np

from ._linalg import segment_sum, sym
from .graph import ManifoldError, Poses


def residuals(edges, X):
    """Rotation and translation residuals of every edge.

    Returns
    -------
    rR : ndarray, shape (m, d, d)
        ``R_i R~ - R_j``
    rt : ndarray, shape (m, d)
        ``R_i t~ + t_i - t_j``
    """
    Ri = X.R[edges.i]
    rR = Ri @ edges.R - X.R[edges.j]
    rt = np.einsum("mab,mb->ma", Ri, edges.t) + X.t[edges.i] - X.t[edges.j]
    return rR, rt


def edge_errors(edges, X):
    """Weighted squared residual ``s`` of every edge."""
    rR, rt = residuals(edges, X)
    return edges.kappa * np.sum(rR**2, axis=(1, 2)) + edges.tau * np.sum(rt**2, axis=1)


def edge_error(m, X_i, X_j):
    """Weighted squared residual of a single measurement.

    ``m`` may be any object with ``t``, ``R``, ``kappa`` and ``tau``; the poses
    are :class:`~mmpgo.graph.Pose` objects or anything with ``t`` and ``R``.

    >>> import numpy as np
    >>> from types import SimpleNamespace as NS
    >>> m = NS(t=np.zeros(2), R=np.eye(2), kappa=1.0, tau=0.0)
    >>> edge_error(m, NS(t=np.zeros(2), R=np.eye(2)), NS(t=np.zeros(2), R=-np.eye(2)))
    8.0
    """
    t_i, R_i = np.asarray(X_i.t, float), np.asarray(X_i.R, float)
    t_j, R_j = np.asarray(X_j.t, float), np.asarray(X_j.R, float)
    if t_i.shape != t_j.shape or R_i.shape != R_j.shape or np.shape(m.R) != R_i.shape:
        raise ValueError("dimension mismatch between measurement and poses")
    rR = R_i @ m.R - R_j
    rt = R_i @ m.t + t_i - t_j
    return float(m.kappa * np.sum(rR**2) + m.tau * np.sum(rt**2))


def _check_shape(dgraph, X):
    if X.n != dgraph.n or X.d != dgraph.d:
        raise ValueError(f"iterate has shape (n={X.n}, d={X.d}), graph expects (n={dgraph.n}, d={dgraph.d})")


def edge_terms(dgraph, kernel, X, s=None):
    """Per-edge objective terms ``F_ij``: ``s/2`` intra, ``rho(s)/2`` inter."""
    _check_shape(dgraph, X)
    if s is None:
        s = edge_errors(dgraph.edges, X)
    out = 0.5 * s
    inter = dgraph.inter
    if np.any(inter) and not kernel.is_trivial:
        out[inter] = 0.5 * kernel.value(s[inter])
    return out


def objective_value(dgraph, kernel, X):
    """Global objective ``F(X)``.

    Intra-node edges enter through their squared residual, inter-node edges
    through the loss kernel.
    """
    return float(np.sum(edge_terms(dgraph, kernel, X)))


def node_objective_terms(dgraph, kernel, X):
    """Intra-node sums ``F^{aa}`` (per node) and pair sums ``F^{ab}`` (per unordered pair)."""
    f = edge_terms(dgraph, kernel, X)
    intra = ~dgraph.inter
    Faa = segment_sum(dgraph.node_i[intra], f[intra], dgraph.n_nodes)
    Fab = segment_sum(dgraph.edge_pair[dgraph.inter], f[dgraph.inter], len(dgraph.pairs))
    return Faa, Fab


def edge_weights(dgraph, kernel, X, s=None):
    """Weights ``omega``: 1 on intra-node edges, ``rho'(s)`` on inter-node edges."""
    _check_shape(dgraph, X)
    w = np.ones(dgraph.m)
    inter = dgraph.inter
    if np.any(inter) and not kernel.is_trivial:
        if s is None:
            s = edge_errors(dgraph.edges, X)
        w[inter] = kernel.slope(s[inter])
    return w


def edge_weight(kernel, m, X_i, X_j, inter=True):
    """Weight of one measurement; always 1 for an intra-node edge."""
    if not inter:
        return 1.0
    return kernel.slope(edge_error(m, X_i, X_j))


def _accumulate(dgraph, w, rR, rt, out=None):
    """Scatter per-edge gradients of ``w/2 * s`` onto the poses."""
    e = dgraph.edges
    n, d = dgraph.n, dgraph.d
    if out is None:
        out = Poses(np.zeros((n, d)), np.zeros((n, d, d)))
    wk = (w * e.kappa)[:, None, None]
    wt = (w * e.tau)[:, None]
    gRi = wk * (rR @ np.swapaxes(e.R, 1, 2)) + (wt * rt)[:, :, None] * e.t[:, None, :]
    np.add.at(out.R, e.i, gRi)
    np.add.at(out.R, e.j, -wk * rR)
    np.add.at(out.t, e.i, wt * rt)
    np.add.at(out.t, e.j, -wt * rt)
    return out


def euclidean_gradient(dgraph, kernel, X, weights=None):
    """Euclidean gradient of ``F`` with respect to the ambient pose arrays.

    Parameters
    ----------
    dgraph : DistributedPoseGraph
    kernel : LossKernel
    X : Poses
        Evaluation point; need not lie on the manifold.
    weights : ndarray, optional
        Precomputed ``omega`` at ``X``.

    Returns
    -------
    Poses
        Gradient blocks ``[grad_t | grad_R]`` per pose. Node ``alpha``'s block
        ``grad_{X^alpha} F`` is ``out.take(dgraph.node_slice(alpha))``; it only
        involves edges incident to ``alpha``'s poses.
    """
    _check_shape(dgraph, X)
    rR, rt = residuals(dgraph.edges, X)
    if weights is None:
        s = dgraph.edges.kappa * np.sum(rR**2, axis=(1, 2)) + dgraph.edges.tau * np.sum(rt**2, axis=1)
        weights = edge_weights(dgraph, kernel, X, s)
    return _accumulate(dgraph, weights, rR, rt)


def node_gradients(dgraph, kernel, X):
    """Per-node gradient blocks ``[grad_{X^1} F, ..., grad_{X^N} F]``."""
    return dgraph.split(euclidean_gradient(dgraph, kernel, X))


def riemannian_gradient(X, eucl_grad, tol=1e-6):
    """Project a Euclidean gradient onto the tangent space of ``R^{dn} x SO(d)^n``."""
    X.check_manifold(tol)
    G = eucl_grad
    return Poses(G.t.copy(), G.R - X.R @ sym(np.swapaxes(X.R, 1, 2) @ G.R))


def riemannian_gradient_norm(X, eucl_grad, tol=1e-6):
    """Frobenius norm of the Riemannian gradient.

    Raises
    ------
    ManifoldError
        If ``X`` is off the manifold by more than ``tol``.
    """
    return riemannian_gradient(X, eucl_grad, tol).norm()


__all__ = [
    "ManifoldError",
    "edge_error",
    "edge_errors",
    "edge_terms",
    "edge_weight",
    "edge_weights",
    "euclidean_gradient",
    "node_gradients",
    "node_objective_terms",
    "objective_value",
    "residuals",
    "riemannian_gradient",
    "riemannian_gradient_norm",
]
