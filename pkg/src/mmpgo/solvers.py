"""MM-PGO, AMM-PGO* and AMM-PGO# iteration engines.

All three methods share one pattern per iteration ``k``:

1. extrapolate ``Y = X + lambda (X - X_prev)`` per node (``lambda = 0`` for MM);
2. minimize the per-pose surrogate ``H(.|Y)`` in closed form;
3. improve the per-node surrogate ``G(.|Y)`` starting from that solution;
4. restart (re-anchor at ``X^k`` and damp the momentum) when a sufficient
   decrease test fails.

AMM-PGO* runs its tests on the global objective, collected by a master node.
AMM-PGO# runs them per node on a ledger of local scalars and never touches
the master channel.

Surrogate weights ``omega`` are always taken at ``X^k``; the linear term
uses the exact gradient at the center (``Y`` or ``X^k``).
"""

import logging
import time
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

from ._linalg import segment_sum
from .graph import Poses
from .kernels import LossKernel, Trivial, parse_kernel
from .netsim import Bus
from .objective import edge_terms, edge_weights, euclidean_gradient, residuals, riemannian_gradient_norm
from .surrogate import SurrogateBlocks, omega_block_arrays

log = logging.getLogger(__name__)


class Method(str, Enum):
    MM = "mm"
    AMM_STAR = "amm-star"
    AMM_SHARP = "amm-sharp"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the three methods.

    The defaults reproduce the experimental setup: ``eta=5e-4``,
    ``xi=1e-10``, ``zeta=1.5e-10``, ``psi=1e-10``, ``phi=1e-6`` and at most one
    improvement step per iteration.

    ``force_restart`` makes every restart test fire (the ``psi -> inf``
    limit). ``grad_tol`` enables an optional early exit on the Riemannian
    gradient norm; by default runs are fixed-length.
    """

    method: Method = Method.AMM_SHARP
    kernel: LossKernel = field(default_factory=Trivial)
    eta: float = 5e-4
    xi: float = 1e-10
    zeta: float = 1.5e-10
    psi: float = 1e-10
    phi: float = 1e-6
    max_iter: int = 1000
    improve_budget: int = 1
    seed: int = 0
    force_restart: bool = False
    grad_tol: float = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "kernel", parse_kernel(self.kernel))
        self.validate()

    def validate(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if not self.zeta >= self.xi >= 0.0:
            raise ConfigError(f"need zeta >= xi >= 0, got xi={self.xi}, zeta={self.zeta}")
        if not self.psi > 0.0:
            raise ConfigError(f"psi must be positive, got {self.psi}")
        if not 0.0 < self.phi <= 1.0:
            raise ConfigError(f"phi must be in (0, 1], got {self.phi}")
        if self.improve_budget not in (0, 1):
            raise ConfigError("improve_budget must be 0 or 1")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise ConfigError("max_iter must be a nonnegative integer")
        return self

    def replace(self, **kw):
        return replace(self, **kw)


# --------------------------------------------------------------------------
# Nesterov momentum


@dataclass
class NesterovState:
    s: np.ndarray
    lam: np.ndarray
    X_prev: Poses


def nesterov_scalars(s):
    """``s+ = (sqrt(4 s^2 + 1) + 1) / 2`` and ``lambda = (s - 1) / s+``.

    >>> s1, lam = nesterov_scalars(1.0)
    >>> round(float(s1), 6), float(lam)
    (1.618034, 0.0)
    """
    s = np.asarray(s, dtype=float)
    s_next = 0.5 * (np.sqrt(4.0 * s * s + 1.0) + 1.0)
    return s_next, (s - 1.0) / s_next


def nesterov_extrapolate(dgraph, s, X, X_prev):
    """Per-node extrapolation ``Y^a = X^a + lambda^a (X^a - X_prev^a)``.

    Returns ``(Y, s_next, lam)``. ``Y`` lives in the ambient space.
    """
    s_next, lam = nesterov_scalars(s)
    lp = lam[dgraph.node_of]
    Y = Poses(X.t + lp[:, None] * (X.t - X_prev.t), X.R + lp[:, None, None] * (X.R - X_prev.R))
    return Y, s_next, lam


def _damp(s):
    return np.maximum(0.5 * s, 1.0)


def _relax(Fbar, F, eta):
    """``(1 - eta) Fbar + eta F`` written so it can never increase ``Fbar``.

    Equal to the convex combination whenever ``F <= Fbar``, which the
    restart logic maintains; the clamp only absorbs last-ulp rounding.
    """
    return Fbar - eta * np.maximum(Fbar - F, 0.0)


# --------------------------------------------------------------------------
# bookkeeping


@dataclass
class IterationRecord:
    iter: int
    F: float
    Fbar: float
    grad_norm_half: float
    grad_norm: float
    step_norm: float
    restarts: int
    comm_rounds: int
    master_calls: int
    wall_ms: float


TRACE_COLUMNS = tuple(f.name for f in fields(IterationRecord))


class IterationTrace(list):
    """List of :class:`IterationRecord` with column access."""

    def column(self, name):
        return np.array([getattr(r, name) for r in self], dtype=float)


@dataclass
class RestartLedger:
    """Per-node scalars of the decentralized restart.

    Pair quantities are indexed by the unordered neighbor pairs of the graph
    (``dgraph.pairs``, rows ``(a, b)`` with ``a < b``); ``F_given[p, 0]`` is
    ``F^{a|b}`` and ``F_given[p, 1]`` is ``F^{b|a}``.
    """

    F_aa: np.ndarray
    F_a: np.ndarray
    Fbar_a: np.ndarray
    F_given: np.ndarray
    F_ab: np.ndarray
    E_ab: np.ndarray
    E_given: np.ndarray

    def node_pair_sum(self, dgraph):
        """``sum_beta F^{a|beta}`` per node."""
        P = dgraph.pairs
        N = dgraph.n_nodes
        return segment_sum(P[:, 0], self.F_given[:, 0], N) + segment_sum(P[:, 1], self.F_given[:, 1], N)

    def copy(self):
        return RestartLedger(*(getattr(self, f.name).copy() for f in fields(self)))


@dataclass
class SolverState:
    k: int
    X: Poses
    nesterov: NesterovState
    weights: np.ndarray
    grad: Poses
    F: float
    Fbar: float
    X_half: Poses = None
    ledger: RestartLedger = None
    restarts: int = 0
    fallbacks: int = 0
    bus: Bus = None
    elapsed: float = 0.0


def node_shares(dgraph, kernel, X):
    """Per-node shares of ``F``: intra edges plus inter edges owned by their source."""
    f = edge_terms(dgraph, kernel, X)
    return segment_sum(dgraph.node_i, f, dgraph.n_nodes)


def _objective(bus, dgraph, kernel, X, out_of_band):
    return bus.master_aggregate(node_shares(dgraph, kernel, X), out_of_band=out_of_band)


def _pair_terms(dgraph, kernel, X):
    """``F^{aa}`` per node and ``F^{ab}`` per unordered pair."""
    f = edge_terms(dgraph, kernel, X)
    intra = ~dgraph.inter
    N = dgraph.n_nodes
    F_aa = segment_sum(dgraph.node_i[intra], f[intra], N)
    F_ab = segment_sum(dgraph.edge_pair[dgraph.inter], f[dgraph.inter], len(dgraph.pairs))
    return F_aa, F_ab


def _sides(dgraph):
    """Side (0 or 1) of the pair row that each inter edge's source node occupies."""
    inter = dgraph.inter
    p = dgraph.edge_pair[inter]
    return p, (dgraph.node_i[inter] != dgraph.pairs[p, 0]).astype(np.int64)


def _E_given(dgraph, weights, X, Xk):
    """``E^{a|b}(X^a | X^k)`` for both sides of every neighbor pair, shape ``(P, 2)``.

    ``1/2 omega ||X_side - X^k_side||^2_Omega + <grad_side F_ij(X^k), X_side - X^k_side>``
    summed over the edges of the pair.
    """
    P = len(dgraph.pairs)
    out = np.zeros((P, 2))
    sel = np.flatnonzero(dgraph.inter)
    if sel.size == 0:
        return out
    e = dgraph.edges.subset(sel)
    w = weights[sel]
    D = X - Xk
    src, dst = omega_block_arrays(e)
    Di = np.concatenate([D.t[e.i][:, :, None], D.R[e.i]], axis=2)
    Dj = np.concatenate([D.t[e.j][:, :, None], D.R[e.j]], axis=2)
    q_src = 0.5 * w * np.einsum("mab,mbc,mac->m", Di, src, Di)
    q_dst = 0.5 * w * np.einsum("mab,mbc,mac->m", Dj, dst, Dj)
    rR, rt = residuals(e, Xk)
    wk = (w * e.kappa)[:, None, None]
    wt = (w * e.tau)[:, None]
    gRi = wk * (rR @ np.swapaxes(e.R, 1, 2)) + (wt * rt)[:, :, None] * e.t[:, None, :]
    lin_src = np.sum(gRi * D.R[e.i], axis=(1, 2)) + np.sum(wt * rt * D.t[e.i], axis=1)
    lin_dst = -np.sum(wk * rR * D.R[e.j], axis=(1, 2)) - np.sum(wt * rt * D.t[e.j], axis=1)
    p, side = _sides(dgraph)
    np.add.at(out, (p, side), q_src + lin_src)
    np.add.at(out, (p, 1 - side), q_dst + lin_dst)
    return out


def init_ledger(dgraph, kernel, X0):
    F_aa, F_ab = _pair_terms(dgraph, kernel, X0)
    F_given = np.stack([0.5 * F_ab, 0.5 * F_ab], axis=1)
    led = RestartLedger(
        F_aa=F_aa,
        F_a=F_aa.copy(),
        Fbar_a=None,
        F_given=F_given,
        F_ab=F_ab,
        E_ab=F_ab.copy(),
        E_given=F_given.copy(),
    )
    led.F_a = F_aa + led.node_pair_sum(dgraph)
    led.Fbar_a = led.F_a.copy()
    return led


def _pose_mask(dgraph, node_mask):
    return np.asarray(node_mask, bool)[dgraph.node_of]


def _assign(dst, src, pose_mask):
    dst.t[pose_mask] = src.t[pose_mask]
    dst.R[pose_mask] = src.R[pose_mask]


def _node_sqdist(dgraph, A, B):
    return segment_sum(dgraph.node_of, (A - B).pose_sqnorms(), dgraph.n_nodes)


# --------------------------------------------------------------------------
# iterations


def init_state(dgraph, cfg, X0):
    """State at ``k = 0``: momentum reset, ``Fbar = F(X0)``, ledger initialized."""
    X0.check_manifold()
    if X0.n != dgraph.n or X0.d != dgraph.d:
        raise ValueError("initial iterate does not match the graph")
    kernel = cfg.kernel
    bus = Bus(dgraph, allow_master=cfg.method != Method.AMM_SHARP)
    w = edge_weights(dgraph, kernel, X0)
    g = euclidean_gradient(dgraph, kernel, X0, w)
    F0 = _objective(bus, dgraph, kernel, X0, out_of_band=True)
    nest = NesterovState(np.ones(dgraph.n_nodes), np.zeros(dgraph.n_nodes), X0.copy())
    ledger = init_ledger(dgraph, kernel, X0) if cfg.method == Method.AMM_SHARP else None
    return SolverState(0, X0.copy(), nest, w, g, F0, F0, None, ledger, bus=bus)


def _finish(dgraph, cfg, state, X1, F1=None):
    """Advance ``k``, roll the momentum history and refresh cached gradients."""
    kernel = cfg.kernel
    state.nesterov.X_prev = state.X
    state.X = X1
    state.weights = edge_weights(dgraph, kernel, X1)
    state.grad = euclidean_gradient(dgraph, kernel, X1, state.weights)
    if F1 is None:
        F1 = _objective(state.bus, dgraph, kernel, X1, out_of_band=True)
    state.F = F1
    state.k += 1
    return state


def mm_iteration(dgraph, kernel, cfg, state):
    """One unaccelerated MM step (``s = 1``, ``lambda = 0``, no restart tests).

    Every node minimizes ``H(.|X^k)`` and then improves ``G(.|X^k)``. A node
    whose ``G`` value would rise above zero (numerical trouble only) keeps its
    previous poses.
    """
    X, g = state.X, state.grad
    state.bus.round_exchange(state.bus.snapshots((X,)))
    S = SurrogateBlocks(dgraph, X, state.weights, cfg.xi, cfg.zeta)
    Xh = S.solve_H(X, g)
    X1, Gv = S.improve_G(Xh, X, g, budget=cfg.improve_budget)
    bad = Gv > 0.0
    if bad.any():
        _assign(X1, X, _pose_mask(dgraph, bad))
        state.fallbacks += int(bad.sum())
    state.X_half = Xh
    _finish(dgraph, cfg, state, X1)
    state.Fbar = _relax(state.Fbar, state.F, cfg.eta)
    return state


def amm_star_iteration(dgraph, kernel, cfg, state, master=None):
    """One AMM-PGO* step: Nesterov extrapolation plus master-node restarts."""
    bus = master or state.bus
    X, gX = state.X, state.grad
    Fbar = state.Fbar
    nest = state.nesterov
    Y, s_next, lam = nesterov_extrapolate(dgraph, nest.s, X, nest.X_prev)
    nest.lam = lam
    bus.round_exchange(bus.snapshots((X, Y)))
    gY = euclidean_gradient(dgraph, kernel, Y)
    S = SurrogateBlocks(dgraph, X, state.weights, cfg.xi, cfg.zeta)
    Xh = S.solve_H(Y, gY)
    X1, _ = S.improve_G(Xh, Y, gY, budget=cfg.improve_budget)
    Fh = _objective(bus, dgraph, kernel, Xh, out_of_band=False)
    F1 = _objective(bus, dgraph, kernel, X1, out_of_band=False)
    forced = cfg.force_restart
    if forced or Fh > Fbar - cfg.psi * (Xh - X).sqnorm():
        Xh = S.solve_H(X, gX)
        Fh = _objective(bus, dgraph, kernel, Xh, out_of_band=False)
        state.restarts += 1
    if forced or F1 > Fbar - cfg.psi * (X1 - X).sqnorm():
        X1, Gv = S.improve_G(Xh, X, gX, budget=cfg.improve_budget)
        s_next = _damp(s_next)
        state.restarts += 1
        if forced:
            # the psi -> inf limit is the plain MM step, safeguard included
            bad = Gv > 0.0
            if bad.any():
                _assign(X1, X, _pose_mask(dgraph, bad))
                state.fallbacks += int(bad.sum())
        F1 = _objective(bus, dgraph, kernel, X1, out_of_band=False)
    if not forced:
        if Fbar - F1 < cfg.phi * (Fbar - Fh):
            X1, F1 = Xh.copy(), Fh
        if F1 > Fbar:
            log.debug("k=%d: candidate above Fbar, keeping X^k", state.k)
            X1, F1 = X.copy(), state.F
            state.fallbacks += 1
    nest.s = s_next
    state.X_half = Xh
    _finish(dgraph, cfg, state, X1, F1)
    state.Fbar = _relax(Fbar, state.F, cfg.eta)
    return state


def amm_sharp_iteration(dgraph, kernel, cfg, state, ledger=None):
    """One AMM-PGO# step: per-node restart decisions from the local ledger."""
    bus = state.bus
    led = ledger or state.ledger
    X, gX = state.X, state.grad
    nest = state.nesterov
    F_a, Fbar_a = led.F_a, led.Fbar_a
    Y, s_next, lam = nesterov_extrapolate(dgraph, nest.s, X, nest.X_prev)
    nest.lam = lam
    bus.round_exchange(bus.snapshots((X, Y)))
    gY = euclidean_gradient(dgraph, kernel, Y)
    S = SurrogateBlocks(dgraph, X, state.weights, cfg.xi, cfg.zeta)
    Xh = S.solve_H(Y, gY)
    Gh = S.G_values(Xh, X, gX) + F_a
    X1, _ = S.improve_G(Xh, Y, gY, budget=cfg.improve_budget)
    G1 = S.G_values(X1, X, gX) + F_a
    forced = cfg.force_restart
    N = dgraph.n_nodes

    r1 = np.ones(N, bool) if forced else Gh > Fbar_a - cfg.psi * _node_sqdist(dgraph, Xh, X)
    if r1.any():
        _assign(Xh, S.solve_H(X, gX), _pose_mask(dgraph, r1))
        Gh = np.where(r1, S.G_values(Xh, X, gX) + F_a, Gh)
    r2 = np.ones(N, bool) if forced else G1 > Fbar_a
    if r2.any():
        Xr, _ = S.improve_G(Xh, X, gX, budget=cfg.improve_budget, nodes=r2)
        _assign(X1, Xr, _pose_mask(dgraph, r2))
        G1 = np.where(r2, S.G_values(X1, X, gX) + F_a, G1)
        s_next = np.where(r2, _damp(s_next), s_next)
    state.restarts += int(r1.sum() + r2.sum())
    if not forced:
        swap = Fbar_a - G1 < cfg.phi * (Fbar_a - Gh)
        if swap.any():
            _assign(X1, Xh, _pose_mask(dgraph, swap))
            G1 = np.where(swap, Gh, G1)
    bad = G1 > Fbar_a
    if bad.any():
        _assign(X1, X, _pose_mask(dgraph, bad))
        G1 = np.where(bad, F_a, G1)
        state.fallbacks += int(bad.sum())

    # ledger exchange: new boundary poses and E^{a|b} go to each neighbor
    E_side = _E_given(dgraph, state.weights, X1, X)
    scalars = {}
    for p, (a, b) in enumerate(dgraph.pairs):
        scalars[(int(a), int(b))] = (E_side[p, 0],)
        scalars[(int(b), int(a))] = (E_side[p, 1],)
    inboxes = bus.round_exchange(bus.snapshots((X1,), scalars))
    received = {(snap.sender, snap.receiver): snap.scalars[0] for box in inboxes.values() for snap in box}
    F_aa, F_ab = _pair_terms(dgraph, kernel, X1)
    E_ab = np.empty(len(dgraph.pairs))
    for p, (a, b) in enumerate(dgraph.pairs):
        # node b assembles E^{ab} from its own term and the one a sent
        E_ab[p] = received[(int(a), int(b))] + E_side[p, 1] + led.F_ab[p]
    E_given = E_side + led.F_given
    led.F_given = E_given + 0.5 * (F_ab - E_ab)[:, None]
    led.F_ab, led.E_ab, led.E_given = F_ab, E_ab, E_given
    led.F_aa = F_aa
    led.F_a = F_aa + led.node_pair_sum(dgraph)
    led.Fbar_a = _relax(Fbar_a, led.F_a, cfg.eta)

    nest.s = s_next
    state.X_half = Xh
    _finish(dgraph, cfg, state, X1)
    state.Fbar = bus.master_aggregate(led.Fbar_a, out_of_band=True)
    return state


_ENGINES = {
    Method.MM: mm_iteration,
    Method.AMM_STAR: amm_star_iteration,
    Method.AMM_SHARP: amm_sharp_iteration,
}


@dataclass
class RunResult:
    X: Poses
    X_half: Poses
    trace: IterationTrace
    state: SolverState


def _record(dgraph, cfg, state, step_norm, grad_half):
    acc = state.bus.accounting
    return IterationRecord(
        iter=state.k,
        F=state.F,
        Fbar=state.Fbar,
        grad_norm_half=grad_half,
        grad_norm=riemannian_gradient_norm(state.X, state.grad),
        step_norm=step_norm,
        restarts=state.restarts,
        comm_rounds=acc.rounds,
        master_calls=acc.master_calls,
        wall_ms=1e3 * state.elapsed,
    )


def run(dgraph, cfg, X0, callback=None):
    """Run ``cfg.max_iter`` iterations of ``cfg.method`` from ``X0``.

    Parameters
    ----------
    dgraph : DistributedPoseGraph
    cfg : SolverConfig
    X0 : Poses
        On-manifold initial iterate.
    callback : callable, optional
        Called as ``callback(state)`` after initialization and after every
        iteration; used by tests to audit invariants.

    Returns
    -------
    RunResult
        Final iterate, the last ``X^{k+1/2}``, and the trace with one row for
        the initial state plus one per iteration.
    """
    cfg.validate()
    kernel = cfg.kernel
    step = _ENGINES[cfg.method]
    t0 = time.perf_counter()
    state = init_state(dgraph, cfg, X0)
    state.elapsed = time.perf_counter() - t0
    trace = IterationTrace([_record(dgraph, cfg, state, 0.0, float("nan"))])
    if callback is not None:
        callback(state)
    for _ in range(int(cfg.max_iter)):
        t0 = time.perf_counter()
        X_old = state.X
        state = step(dgraph, kernel, cfg, state)
        state.elapsed += time.perf_counter() - t0
        g_half = riemannian_gradient_norm(state.X_half, euclidean_gradient(dgraph, kernel, state.X_half))
        trace.append(_record(dgraph, cfg, state, (state.X - X_old).norm(), g_half))
        if callback is not None:
            callback(state)
        log.debug("k=%d F=%.10g Fbar=%.10g", state.k, state.F, state.Fbar)
        if cfg.grad_tol is not None and trace[-1].grad_norm <= cfg.grad_tol:
            break
    return RunResult(state.X, state.X_half, trace, state)
