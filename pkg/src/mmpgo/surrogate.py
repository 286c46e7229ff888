"""Decoupling quadratic surrogates ``G`` and ``H`` and their minimizers.

Notation
--------
A pose block is the ``d x (d+1)`` matrix ``X_i = [t_i | R_i]`` and a quadratic
form over it is ``||X_i||^2_P = tr(X_i P X_i^T)``.

For a measurement ``(i, j)`` the edge residual is the quadratic ``||X||^2_M``
with ``M = kappa A A^T + tau b b^T`` on the pair ``[X_i X_j]``. The block
diagonal ``Omega`` replaces ``M`` by a sum of single-pose forms:

    1/2 ||X||^2_Omega = kappa ||R_i||^2 + tau ||R_i t~ + t_i||^2
                      + kappa ||R_j||^2 + tau ||t_j||^2.

Given weights ``omega`` fixed at an anchor, a center ``C`` (the anchor or a
Nesterov extrapolation) and the gradient ``g = grad F(C)``:

* ``G^a(X^a) = 1/2 ||X^a - C^a||^2_Gamma + <g^a, X^a - C^a>`` where ``Gamma``
  keeps intra-node edges exact, uses ``omega * Omega`` on this node's side of
  every inter-node edge, and adds ``xi I``;
* ``H^a_i(X_i) = 1/2 ||X_i - C_i||^2_{Pi_i} + <g_i, X_i - C_i>`` where ``Pi_i``
  sums the ``omega * Omega`` blocks of every edge at pose ``i`` (intra edges with
  ``omega = 1``) plus ``zeta I``.

Because ``Pi >= Gamma >= M``, ``H >= G >= F`` up to the constant ``F(anchor)``.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import project_to_so, segment_sum
from .graph import Poses
from .objective import edge_weights, residuals


class SurrogateConfigError(ValueError):
    pass


class SingularSurrogateError(ArithmeticError):
    """The translation entry of a per-pose block is not positive."""


@dataclass(frozen=True)
class OmegaBlocks:
    """Single-pose quadratic forms of one measurement over ``[t | R]``."""

    src: np.ndarray
    dst: np.ndarray


def omega_block_arrays(edges):
    """Stacked ``Omega`` source and destination blocks, shape ``(m, d+1, d+1)``."""
    m, d = len(edges), edges.d
    k = edges.kappa[:, None, None]
    tau = edges.tau[:, None, None]
    rot = np.zeros((d + 1, d + 1))
    rot[1:, 1:] = np.eye(d)
    v = np.concatenate([np.ones((m, 1)), edges.t], axis=1)
    src = 2.0 * k * rot + 2.0 * tau * (v[:, :, None] * v[:, None, :])
    e1 = np.zeros((d + 1, d + 1))
    e1[0, 0] = 1.0
    dst = 2.0 * k * rot + 2.0 * tau * e1
    return src, dst


def omega_blocks(m):
    """``Omega`` blocks of a single measurement.

    >>> import numpy as np
    >>> from types import SimpleNamespace as NS
    >>> b = omega_blocks(NS(t=np.zeros(2), R=np.eye(2), kappa=1.0, tau=0.0))
    >>> np.diag(b.src), np.diag(b.dst)
    (array([0., 2., 2.]), array([0., 2., 2.]))
    """
    d = np.shape(m.t)[0]
    rot = np.zeros((d + 1, d + 1))
    rot[1:, 1:] = np.eye(d)
    v = np.concatenate([[1.0], np.asarray(m.t, float)])
    e1 = np.zeros(d + 1)
    e1[0] = 1.0
    src = 2.0 * m.kappa * rot + 2.0 * m.tau * np.outer(v, v)
    dst = 2.0 * m.kappa * rot + 2.0 * m.tau * np.outer(e1, e1)
    return OmegaBlocks(src, dst)


def _blocks(X):
    """``(n, d, d+1)`` stack of ``[t_i | R_i]``."""
    return np.concatenate([X.t[:, :, None], X.R], axis=2)


def _unblocks(B):
    return Poses(B[:, :, 0].copy(), B[:, :, 1:].copy())


class SurrogateBlocks:
    """Quadratic forms ``Gamma^a`` and ``Pi_i^a`` built at one anchor.

    ``Gamma`` is never stored densely; :meth:`gamma_quadratic` and
    :meth:`gamma_apply` evaluate it edge by edge. :meth:`gamma` assembles the
    dense matrix of one node for inspection and testing.

    Attributes
    ----------
    dgraph : DistributedPoseGraph
    anchor : Poses
        Iterate at which the weights were evaluated.
    weights : ndarray, shape (m,)
        ``omega`` per edge (1 on intra-node edges).
    pi : ndarray, shape (n, d+1, d+1)
        Per-pose blocks ``Pi_i``.
    xi, zeta : float
    """

    def __init__(self, dgraph, anchor, weights, xi, zeta):
        if not (zeta >= xi >= 0.0):
            raise SurrogateConfigError(f"need zeta >= xi >= 0, got xi={xi}, zeta={zeta}")
        self.dgraph = dgraph
        self.anchor = anchor
        self.weights = np.asarray(weights, dtype=float)
        self.xi = float(xi)
        self.zeta = float(zeta)
        e = dgraph.edges
        d = dgraph.d
        src, dst = omega_block_arrays(e)
        w = self.weights[:, None, None]
        pi = np.zeros((dgraph.n, d + 1, d + 1))
        np.add.at(pi, e.i, w * src)
        np.add.at(pi, e.j, w * dst)
        pi += self.zeta * np.eye(d + 1)
        self.pi = pi
        self._intra = ~dgraph.inter
        self._inter = dgraph.inter

    # ------------------------------------------------------------------ Gamma
    def gamma_quadratic(self, D):
        """Per-node ``1/2 ||D^a||^2_Gamma`` for a global displacement ``D``."""
        g = self.dgraph
        e = g.edges
        w = self.weights
        rR, rt = residuals(e, D)
        q_intra = 0.5 * (e.kappa * np.sum(rR**2, axis=(1, 2)) + e.tau * np.sum(rt**2, axis=1))
        dRi, dRj = D.R[e.i], D.R[e.j]
        u = np.einsum("mab,mb->ma", dRi, e.t) + D.t[e.i]
        q_src = w * (e.kappa * np.sum(dRi**2, axis=(1, 2)) + e.tau * np.sum(u**2, axis=1))
        q_dst = w * (e.kappa * np.sum(dRj**2, axis=(1, 2)) + e.tau * np.sum(D.t[e.j] ** 2, axis=1))
        N = g.n_nodes
        out = segment_sum(g.node_i[self._intra], q_intra[self._intra], N)
        out += segment_sum(g.node_i[self._inter], q_src[self._inter], N)
        out += segment_sum(g.node_j[self._inter], q_dst[self._inter], N)
        out += 0.5 * self.xi * segment_sum(g.node_of, D.pose_sqnorms(), N)
        return out

    def gamma_apply(self, D):
        """``Gamma D`` (node blocks stacked globally; ``Gamma`` is node-block diagonal)."""
        g = self.dgraph
        e = g.edges
        n, d = g.n, g.d
        out = Poses(self.xi * D.t, self.xi * D.R)
        # intra edges: exact residual forms
        sel = np.flatnonzero(self._intra)
        if sel.size:
            es = e.subset(sel)
            rR, rt = residuals(es, D)
            k = es.kappa[:, None, None]
            tau = es.tau[:, None]
            np.add.at(out.R, es.i, k * (rR @ np.swapaxes(es.R, 1, 2)) + (tau * rt)[:, :, None] * es.t[:, None, :])
            np.add.at(out.R, es.j, -k * rR)
            np.add.at(out.t, es.i, tau * rt)
            np.add.at(out.t, es.j, -tau * rt)
        sel = np.flatnonzero(self._inter)
        if sel.size:
            es = e.subset(sel)
            w = self.weights[sel]
            k = (2.0 * w * es.kappa)[:, None, None]
            tau = (2.0 * w * es.tau)[:, None]
            dRi = D.R[es.i]
            u = np.einsum("mab,mb->ma", dRi, es.t) + D.t[es.i]
            np.add.at(out.R, es.i, k * dRi + (tau * u)[:, :, None] * es.t[:, None, :])
            np.add.at(out.t, es.i, tau * u)
            np.add.at(out.R, es.j, k * D.R[es.j])
            np.add.at(out.t, es.j, tau * D.t[es.j])
        assert out.n == n and out.d == d
        return out

    def gamma(self, alpha):
        """Dense ``Gamma^a`` of size ``(d+1) n_a`` in the layout of ``Poses.matrix``."""
        g = self.dgraph
        d = g.d
        b = d + 1
        sl = g.node_slice(alpha)
        na = sl.stop - sl.start
        Gm = self.xi * np.eye(b * na)
        src, dst = omega_block_arrays(g.edges)
        e = g.edges
        for k in range(g.m):
            i, j = int(e.i[k]), int(e.j[k])
            in_i = g.node_of[i] == alpha
            in_j = g.node_of[j] == alpha
            if not g.inter[k]:
                if not in_i:
                    continue
                pi, pj = b * (i - sl.start), b * (j - sl.start)
                A = np.zeros((b * na, d))
                A[pi + 1 : pi + b] = e.R[k]
                A[pj + 1 : pj + b] -= np.eye(d)
                v = np.zeros(b * na)
                v[pi] = 1.0
                v[pi + 1 : pi + b] = e.t[k]
                v[pj] -= 1.0
                Gm += e.kappa[k] * A @ A.T + e.tau[k] * np.outer(v, v)
            else:
                if in_i:
                    p = b * (i - sl.start)
                    Gm[p : p + b, p : p + b] += self.weights[k] * src[k]
                if in_j:
                    p = b * (j - sl.start)
                    Gm[p : p + b, p : p + b] += self.weights[k] * dst[k]
        return Gm

    def pi_per_pose(self, alpha):
        return self.pi[self.dgraph.node_slice(alpha)]

    # ---------------------------------------------------------------- values
    def G_values(self, X, center, grad):
        """Per-node ``G^a(X^a | center)``; ``grad`` is ``grad F(center)``."""
        D = X - center
        lin = np.sum(grad.t * D.t, axis=1) + np.sum(grad.R * D.R, axis=(1, 2))
        return self.gamma_quadratic(D) + segment_sum(self.dgraph.node_of, lin, self.dgraph.n_nodes)

    def G_gradient(self, X, center, grad):
        """Euclidean gradient of ``sum_a G^a`` at ``X``."""
        return self.gamma_apply(X - center) + grad

    def H_values(self, X, center, grad):
        """Per-pose ``H_i(X_i | center)``."""
        D = _blocks(X - center)
        quad = 0.5 * np.einsum("nab,nbc,nac->n", D, self.pi, D)
        return quad + np.sum(_blocks(grad) * D, axis=(1, 2))

    # ----------------------------------------------------------------- solves
    def solve_H(self, center, grad, scale=None):
        """Exact per-pose minimizer of ``H_i`` over ``R^d x SO(d)``.

        Writing ``Pi_i = [[p, q^T], [q, P]]`` and ``B = C_i Pi_i - g_i``, the
        problem is ``min 1/2 tr(X Pi X^T) - <X, B>``. Since ``tr(R P R^T)`` is
        constant on SO(d), eliminating ``t = (b_t - R q) / p`` leaves the
        linear problem ``max <R, B_R - b_t q^T / p>``, solved by Procrustes.

        ``scale`` optionally multiplies ``Pi_i`` per pose (used by the
        backtracking in :meth:`improve_G`).
        """
        pi = self.pi if scale is None else self.pi * np.asarray(scale)[:, None, None]
        return solve_pose_quadratic(pi, _blocks(center), _blocks(grad))

    def improve_G(self, init, center, grad, budget=1, max_halvings=8, nodes=None):
        """Non-increasing improvement of ``G^a`` started from ``init``.

        One majorized projected-gradient step per node: minimize the
        ``Pi``-weighted model ``1/2 ||X - X0||^2_{Pi/s} + <grad G(X0), X - X0>``
        by :meth:`solve_H`. With ``s = 1`` the model majorizes ``G^a`` so the
        step cannot increase it; the step factor ``s`` is halved (at most
        ``max_halvings`` times) until ``G^a`` strictly decreases, otherwise the
        node keeps ``init``.

        Parameters
        ----------
        nodes : array of bool, optional
            Nodes to improve; others are returned unchanged.

        Returns
        -------
        out : Poses
        values : ndarray
            ``G^a(out^a)`` per node.
        """
        g = self.dgraph
        base = self.G_values(init, center, grad)
        out = init.copy()
        if budget <= 0:
            return out, base
        active = np.ones(g.n_nodes, bool) if nodes is None else np.asarray(nodes, bool).copy()
        if not active.any():
            return out, base
        values = base.copy()
        gG = self.G_gradient(init, center, grad)
        step = np.ones(g.n_nodes)
        for _ in range(max_halvings + 1):
            trial = self.solve_H(init, gG, scale=(1.0 / step)[g.node_of])
            tv = self.G_values(trial, center, grad)
            accept = active & (tv < base)
            if accept.any():
                mask = accept[g.node_of]
                out.t[mask] = trial.t[mask]
                out.R[mask] = trial.R[mask]
                values[accept] = tv[accept]
            active &= ~accept
            if not active.any():
                break
            step[active] *= 0.5
        return out, values


def solve_pose_quadratic(pi, C, g):
    """Batched ``argmin 1/2 ||X - C||^2_Pi + <g, X - C>`` over ``R^d x SO(d)``.

    Parameters
    ----------
    pi : ndarray, shape (n, d+1, d+1)
    C, g : ndarray, shape (n, d, d+1)
        Centers and linear terms in the ``[t | R]`` layout.

    Returns
    -------
    Poses
    """
    p = pi[:, 0, 0]
    if np.any(p <= 0.0):
        bad = int(np.argmax(p <= 0.0))
        raise SingularSurrogateError(f"translation block of pose {bad} is {p[bad]:.3g}; need zeta > 0 or an incident edge")
    q = pi[:, 1:, 0]
    B = C @ pi - g
    bt, BR = B[:, :, 0], B[:, :, 1:]
    A = BR - bt[:, :, None] * (q / p[:, None])[:, None, :]
    R = project_to_so(A)
    t = (bt - np.einsum("nab,nb->na", R, q)) / p[:, None]
    return Poses(t, R)


def build_surrogate(dgraph, kernel, anchor, xi, zeta, weights=None):
    """Assemble ``Gamma`` and ``Pi`` blocks with weights taken at ``anchor``."""
    if weights is None:
        weights = edge_weights(dgraph, kernel, anchor)
    return SurrogateBlocks(dgraph, anchor, weights, xi, zeta)


def _node_sl(blocks, alpha):
    return blocks.dgraph.node_slice(alpha)


def surrogate_value_G(blocks, alpha, X, center, grad):
    """``G^a(X^a | center)`` for one node.

    ``X``, ``center`` and ``grad`` are global pose stacks; only node ``alpha``'s
    poses enter the value.
    """
    return float(blocks.G_values(X, center, grad)[alpha])


def surrogate_value_H_pose(blocks, i, X_i, center_i, grad_i):
    """``H_i`` of a single global pose index ``i``; arguments are ``(d, d+1)`` blocks."""
    D = np.asarray(X_i, float) - np.asarray(center_i, float)
    return float(0.5 * np.trace(D @ blocks.pi[i] @ D.T) + np.sum(np.asarray(grad_i, float) * D))


def solve_H_exact(blocks, alpha, center, grad):
    """Closed-form per-pose minimizer of ``H^a``; returns node ``alpha``'s poses."""
    sl = _node_sl(blocks, alpha)
    pi = blocks.pi[sl]
    return solve_pose_quadratic(pi, _blocks(center.take(sl)), _blocks(grad.take(sl)))


def improve_G_step(blocks, alpha, init, center, grad, budget=1):
    """Surrogate non-increasing update of node ``alpha`` started from ``init``."""
    mask = np.zeros(blocks.dgraph.n_nodes, bool)
    mask[alpha] = True
    out, _ = blocks.improve_G(init, center, grad, budget=budget, nodes=mask)
    return out.take(_node_sl(blocks, alpha))
