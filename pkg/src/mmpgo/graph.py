"""Pose, measurement and pose-graph containers.

Poses are stored column-wise as two arrays: translations ``t`` with shape
``(n, d)`` and rotations ``R`` with shape ``(n, d, d)``. A pose ``i`` is the
``d x (d+1)`` block ``[t_i | R_i]``. Measurements are kept as parallel edge
arrays so that objective and gradient evaluation vectorize over edges.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._linalg import orthogonality_error, project_to_so

ACCEPT_TOL = 1e-6
REPROJECT_TOL = 1e-3


class GraphError(ValueError):
    """Malformed or ill-posed pose graph."""


class ManifoldError(ValueError):
    """A rotation is too far from SO(d) to be accepted."""


def _as_rotations(R, what="rotation"):
    """Validate a stack of rotations, re-projecting small quantization errors."""
    R = np.array(R, dtype=float)
    if R.size == 0:
        return R
    err = orthogonality_error(R)
    det = np.linalg.det(R)
    if np.any(det <= 0.0) or np.any(err > REPROJECT_TOL):
        bad = int(np.argmax(np.where(det <= 0.0, np.inf, err)))
        raise ManifoldError(f"{what} {bad} is not in SO(d) (||R^T R - I|| = {err[bad]:.3g})")
    fix = err > ACCEPT_TOL
    if np.any(fix):
        R[fix] = project_to_so(R[fix])
    return R


@dataclass(frozen=True)
class Pose:
    """One element of SE(d), stored as the ``d x (d+1)`` block ``[t | R]``."""

    t: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        R = np.asarray(self.R, dtype=float)
        d = t.shape[0]
        if d not in (2, 3) or R.shape != (d, d):
            raise ValueError(f"pose must be SE(2) or SE(3), got t{t.shape} R{R.shape}")
        if orthogonality_error(R) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ManifoldError("pose rotation is not in SO(d)")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "R", R)

    @property
    def d(self):
        return self.t.shape[0]

    def matrix(self):
        return np.column_stack([self.t, self.R])

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.eye(d))


class Poses:
    """A stack of ``n`` poses; the global iterate ``X`` of the solvers.

    Also used for ambient points (e.g. the Nesterov extrapolation ``Y``) whose
    rotation blocks are not orthogonal; only :meth:`check_manifold` cares.
    """

    __slots__ = ("t", "R")

    def __init__(self, t, R):
        t = np.asarray(t, dtype=float)
        R = np.asarray(R, dtype=float)
        if t.ndim != 2 or R.ndim != 3 or R.shape != (t.shape[0], t.shape[1], t.shape[1]):
            raise ValueError(f"inconsistent pose arrays t{t.shape} R{R.shape}")
        self.t = t
        self.R = R

    @classmethod
    def identity(cls, n, d):
        return cls(np.zeros((n, d)), np.broadcast_to(np.eye(d), (n, d, d)).copy())

    @classmethod
    def from_poses(cls, poses):
        poses = list(poses)
        return cls(np.array([p.t for p in poses]), np.array([p.R for p in poses]))

    @property
    def n(self):
        return self.t.shape[0]

    @property
    def d(self):
        return self.t.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return Pose(self.t[i], self.R[i])

    def copy(self):
        return Poses(self.t.copy(), self.R.copy())

    def __add__(self, other):
        return Poses(self.t + other.t, self.R + other.R)

    def __sub__(self, other):
        return Poses(self.t - other.t, self.R - other.R)

    def __mul__(self, c):
        return Poses(self.t * c, self.R * c)

    __rmul__ = __mul__

    def inner(self, other):
        return float(np.sum(self.t * other.t) + np.sum(self.R * other.R))

    def sqnorm(self):
        return self.inner(self)

    def norm(self):
        return float(np.sqrt(self.sqnorm()))

    def pose_sqnorms(self):
        """Per-pose squared Frobenius norms of ``[t_i | R_i]``."""
        return np.sum(self.t**2, axis=1) + np.sum(self.R**2, axis=(1, 2))

    def matrix(self):
        """The ``d x (d+1)n`` matrix ``[t_1 R_1 ... t_n R_n]``."""
        blocks = np.concatenate([self.t[:, :, None], self.R], axis=2)
        return np.concatenate(list(blocks), axis=1) if self.n else np.zeros((self.d, 0))

    @classmethod
    def from_matrix(cls, X, d):
        X = np.asarray(X, dtype=float)
        n = X.shape[1] // (d + 1)
        blocks = X.reshape(d, n, d + 1).transpose(1, 0, 2)
        return cls(blocks[:, :, 0].copy(), blocks[:, :, 1:].copy())

    def manifold_error(self):
        if self.n == 0:
            return 0.0
        err = orthogonality_error(self.R)
        det = np.abs(np.linalg.det(self.R) - 1.0)
        return float(max(err.max(), det.max()))

    def check_manifold(self, tol=1e-6):
        err = self.manifold_error()
        if err > tol:
            raise ManifoldError(f"iterate is off SO(d)^n by {err:.3g}")
        return self

    def project(self):
        return Poses(self.t.copy(), project_to_so(self.R))

    def take(self, idx):
        return Poses(self.t[idx], self.R[idx])

    def equals(self, other):
        return np.array_equal(self.t, other.t) and np.array_equal(self.R, other.R)


@dataclass(frozen=True)
class Measurement:
    """Relative pose measurement ``(t_tilde, R_tilde)`` from pose ``i`` to ``j``.

    ``kappa`` and ``tau`` are the rotational and translational weights of the
    squared residual ``kappa ||R_i R~ - R_j||^2 + tau ||R_i t~ + t_i - t_j||^2``.
    """

    i: int
    j: int
    t: np.ndarray
    R: np.ndarray
    kappa: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.i == self.j:
            raise GraphError("a measurement must connect two distinct poses")
        if not (self.kappa > 0 and self.tau > 0):
            raise GraphError("measurement weights must be positive")
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(-1))
        object.__setattr__(self, "R", _as_rotations(np.asarray(self.R, dtype=float)[None])[0])


class EdgeSet:
    """Parallel arrays describing ``m`` measurements."""

    __slots__ = ("i", "j", "t", "R", "kappa", "tau")

    def __init__(self, i, j, t, R, kappa, tau, *, validate=True):
        self.i = np.asarray(i, dtype=np.int64).reshape(-1)
        self.j = np.asarray(j, dtype=np.int64).reshape(-1)
        m = self.i.shape[0]
        if m:
            self.t = np.asarray(t, dtype=float).reshape(m, -1)
            d = self.t.shape[1]
            self.R = np.asarray(R, dtype=float).reshape(m, d, d)
        else:
            d = np.shape(t)[-1] if np.ndim(t) == 2 else 0
            self.t = np.zeros((0, d))
            self.R = np.zeros((0, d, d))
        self.kappa = np.asarray(kappa, dtype=float).reshape(-1) * np.ones(m)
        self.tau = np.asarray(tau, dtype=float).reshape(-1) * np.ones(m)
        if validate and m:
            if np.any(self.i == self.j):
                raise GraphError(f"self-loop measurement at edge {int(np.argmax(self.i == self.j))}")
            if np.any(self.kappa <= 0) or np.any(self.tau <= 0):
                raise GraphError("measurement weights must be positive")
            self.R = _as_rotations(self.R, "measurement rotation")

    @classmethod
    def from_measurements(cls, measurements, d):
        ms = list(measurements)
        if not ms:
            return cls([], [], np.zeros((0, d)), np.zeros((0, d, d)), [], [])
        return cls(
            [m.i for m in ms],
            [m.j for m in ms],
            np.array([m.t for m in ms]),
            np.array([m.R for m in ms]),
            [m.kappa for m in ms],
            [m.tau for m in ms],
        )

    def __len__(self):
        return self.i.shape[0]

    def __getitem__(self, k):
        return Measurement(int(self.i[k]), int(self.j[k]), self.t[k], self.R[k], float(self.kappa[k]), float(self.tau[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def subset(self, idx):
        return EdgeSet(self.i[idx], self.j[idx], self.t[idx], self.R[idx], self.kappa[idx], self.tau[idx], validate=False)

    @property
    def d(self):
        return self.t.shape[1]


@dataclass
class PoseGraph:
    """Centralized pose graph: ``n`` poses in SE(d) and their measurements."""

    d: int
    n: int
    edges: EdgeSet
    initial: Poses = None
    names: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.d not in (2, 3):
            raise GraphError(f"d must be 2 or 3, got {self.d}")
        if self.n < 1:
            raise GraphError("a pose graph needs at least one pose")
        e = self.edges
        if len(e):
            if e.d != self.d:
                raise GraphError(f"measurement dimension {e.d} does not match d={self.d}")
            lo = min(e.i.min(), e.j.min())
            hi = max(e.i.max(), e.j.max())
            if lo < 0 or hi >= self.n:
                raise GraphError(f"measurement references pose outside 0..{self.n - 1}")
        if self.initial is not None and (self.initial.n != self.n or self.initial.d != self.d):
            raise GraphError("initial estimate does not match the graph shape")

    @property
    def m(self):
        return len(self.edges)

    def components(self):
        e = self.edges
        A = coo_matrix((np.ones(len(e)), (e.i, e.j)), shape=(self.n, self.n))
        return connected_components(A, directed=False)

    def is_connected(self):
        return self.components()[0] == 1

    def check_connected(self):
        k, _ = self.components()
        if k != 1:
            raise GraphError(f"pose graph is disconnected ({k} components)")
        return self

    def degrees(self):
        return np.bincount(self.edges.i, minlength=self.n) + np.bincount(self.edges.j, minlength=self.n)


class DistributedPoseGraph:
    """A pose graph whose poses are split among nodes (robots).

    Node ``alpha`` owns the contiguous global pose range
    ``offsets[alpha]:offsets[alpha + 1]``. Edges keep their global indices;
    ``node_i``/``node_j`` give the owning node of each endpoint and ``inter``
    flags edges whose endpoints live on different nodes.

    Parameters
    ----------
    graph : PoseGraph
    sizes : sequence of int
        Pose count of each node; must sum to ``graph.n`` and be positive.
    """

    def __init__(self, graph, sizes):
        sizes = np.asarray(sizes, dtype=np.int64).reshape(-1)
        if sizes.size < 1 or np.any(sizes < 1):
            raise GraphError("every node must own at least one pose")
        if sizes.sum() != graph.n:
            raise GraphError(f"node sizes sum to {sizes.sum()}, graph has {graph.n} poses")
        self.graph = graph
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.node_of = np.repeat(np.arange(sizes.size), sizes)
        e = graph.edges
        self.node_i = self.node_of[e.i]
        self.node_j = self.node_of[e.j]
        self.inter = self.node_i != self.node_j
        self._build_neighbors()

    def _build_neighbors(self):
        N = self.n_nodes
        self.neighbors_out = [set() for _ in range(N)]  # N_+: alpha -> beta edges
        self.neighbors_in = [set() for _ in range(N)]  # N_-: beta -> alpha edges
        for a, b in zip(self.node_i[self.inter], self.node_j[self.inter]):
            self.neighbors_out[a].add(int(b))
            self.neighbors_in[b].add(int(a))
        self.neighbors = [sorted(o | i) for o, i in zip(self.neighbors_out, self.neighbors_in)]
        # unordered neighbor pairs (a < b) and the pair index of each inter edge
        lo = np.minimum(self.node_i, self.node_j)
        hi = np.maximum(self.node_i, self.node_j)
        keys = lo * N + hi
        pair_keys = np.unique(keys[self.inter])
        self.pairs = np.stack([pair_keys // N, pair_keys % N], axis=1) if pair_keys.size else np.zeros((0, 2), np.int64)
        self.edge_pair = np.full(self.m, -1, dtype=np.int64)
        self.edge_pair[self.inter] = np.searchsorted(pair_keys, keys[self.inter])
        # boundary poses a node must send to each neighbor, keyed by ordered pair
        self.boundary = {}
        for k in np.flatnonzero(self.inter):
            i, j = int(self.graph.edges.i[k]), int(self.graph.edges.j[k])
            a, b = int(self.node_i[k]), int(self.node_j[k])
            self.boundary.setdefault((a, b), set()).add(i)
            self.boundary.setdefault((b, a), set()).add(j)
        self.boundary = {key: np.array(sorted(v), dtype=np.int64) for key, v in sorted(self.boundary.items())}

    @classmethod
    def contiguous(cls, graph, n_nodes):
        """Split poses ``0..n-1`` into ``n_nodes`` contiguous, near-equal blocks."""
        n_nodes = int(n_nodes)
        if n_nodes < 1 or n_nodes > graph.n:
            raise GraphError(f"cannot split {graph.n} poses among {n_nodes} nodes")
        base, extra = divmod(graph.n, n_nodes)
        sizes = [base + (1 if a < extra else 0) for a in range(n_nodes)]
        return cls(graph, sizes)

    @property
    def n_nodes(self):
        return int(self.sizes.size)

    @property
    def n(self):
        return self.graph.n

    @property
    def m(self):
        return self.graph.m

    @property
    def d(self):
        return self.graph.d

    @property
    def edges(self):
        return self.graph.edges

    def node_slice(self, alpha):
        return slice(int(self.offsets[alpha]), int(self.offsets[alpha + 1]))

    def locate(self, i):
        """Global pose index to ``(node, local index)``."""
        a = int(self.node_of[i])
        return a, int(i - self.offsets[a])

    def intra_edges(self, alpha=None):
        """Indices of intra-node edges, optionally restricted to one node."""
        mask = ~self.inter
        if alpha is not None:
            mask &= self.node_i == alpha
        return np.flatnonzero(mask)

    def inter_edges(self, alpha=None):
        """Indices of inter-node edges, optionally those touching ``alpha``."""
        mask = self.inter.copy()
        if alpha is not None:
            mask &= (self.node_i == alpha) | (self.node_j == alpha)
        return np.flatnonzero(mask)

    def pair_edges(self, alpha, beta):
        """Indices of edges between nodes ``alpha`` and ``beta`` (either direction)."""
        return np.flatnonzero(
            ((self.node_i == alpha) & (self.node_j == beta)) | ((self.node_i == beta) & (self.node_j == alpha))
        )

    def split(self, X):
        """Per-node views ``[X^1, ..., X^N]`` of a global stack of poses."""
        return [X.take(self.node_slice(a)) for a in range(self.n_nodes)]

    def manifest(self):
        """JSON-serializable mapping node -> global pose id range."""
        return {
            "n_poses": int(self.n),
            "n_nodes": self.n_nodes,
            "strategy": "contiguous",
            "nodes": [
                {"node": a, "first": int(self.offsets[a]), "last": int(self.offsets[a + 1] - 1)}
                for a in range(self.n_nodes)
            ],
        }

    def __repr__(self):
        return (
            f"DistributedPoseGraph(d={self.d}, n={self.n}, m={self.m}, nodes={self.n_nodes}, "
            f"inter={int(self.inter.sum())})"
        )
