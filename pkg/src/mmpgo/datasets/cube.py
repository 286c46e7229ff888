"""Simulated Cube dataset: a rectilinear walk through a cubic lattice."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .._linalg import exp_so, random_rotations
from ..graph import DistributedPoseGraph, EdgeSet, PoseGraph, Poses

_AXES = np.vstack([np.eye(3), -np.eye(3)])


@dataclass(frozen=True)
class CubeParams:
    """Parameters of the Cube generator.

    Attributes
    ----------
    grid : int
        Lattice points per side.
    side_length : float
        Lattice spacing in meters.
    n_poses : int
    loop_prob : float
        Probability of keeping each candidate loop closure.
    sigma_t : float
        Translational noise RMSE (meters).
    sigma_R : float
        Rotational noise RMSE (radians).
    seed : int
    n_nodes : int
    """

    grid: int = 12
    side_length: float = 1.0
    n_poses: int = 3600
    loop_prob: float = 0.1
    sigma_t: float = 0.02
    sigma_R: float = 0.02 * np.pi
    seed: int = 0
    n_nodes: int = 1

    def __post_init__(self):
        if self.grid < 2 or self.n_poses < 1:
            raise ValueError("grid must be >= 2 and n_poses >= 1")
        if not 0.0 <= self.loop_prob <= 1.0:
            raise ValueError("loop_prob must lie in [0, 1]")
        if self.sigma_t < 0 or self.sigma_R < 0:
            raise ValueError("noise levels must be nonnegative")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")


def _walk(rng, grid, n):
    """Lattice walk that never leaves the cube and avoids immediate reversals."""
    pos = np.zeros((n, 3), dtype=np.int64)
    dirs = np.zeros(n, dtype=np.int64)
    p = rng.integers(0, grid, size=3)
    last = -1
    for k in range(n):
        pos[k] = p
        if k == n - 1:
            dirs[k] = last if last >= 0 else 0
            break
        options = []
        for a in range(6):
            q = p + _AXES[a].astype(np.int64)
            if np.all((q >= 0) & (q < grid)) and not (last >= 0 and a == (last + 3) % 6):
                options.append(a)
        a = int(rng.choice(options))
        dirs[k] = a
        p = p + _AXES[a].astype(np.int64)
        last = a
    return pos, dirs


def _frames(rng, dirs):
    """Rotation whose first column is the heading; the second is a random lattice axis."""
    n = dirs.shape[0]
    R = np.zeros((n, 3, 3))
    for k in range(n):
        x = _AXES[dirs[k]]
        perp = [a for a in range(6) if abs(np.dot(_AXES[a], x)) < 0.5]
        y = _AXES[perp[int(rng.integers(len(perp)))]]
        R[k] = np.column_stack([x, y, np.cross(x, y)])
    return R


def _noise_rotations(rng, m, sigma):
    if sigma == 0.0 or m == 0:
        return np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    axis = rng.normal(size=(m, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    angle = np.abs(rng.normal(0.0, sigma, size=m))
    return exp_so(axis * angle[:, None], 3)


def cube_candidates(positions, side_length):
    """Pose pairs ``i < j`` with ``j - i > 1`` lying at most one spacing apart."""
    tree = cKDTree(positions)
    pairs = tree.query_pairs(side_length * (1 + 1e-9), output_type="ndarray")
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[pairs[:, 1] - pairs[:, 0] > 1]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def generate_cube(params=None, **kw):
    """Generate a noisy Cube pose graph and its ground truth.

    Odometry links consecutive poses; each candidate loop closure is kept
    with probability ``loop_prob``. Measurement noise: translation gets a
    zero-mean Gaussian with per-axis standard deviation ``sigma_t / sqrt(3)``
    (so the RMSE is ``sigma_t``); rotation gets an angle ``|N(0, sigma_R)|``
    about a uniformly random axis. Weights are ``kappa = 1 / (2 sigma_R^2)`` and
    ``tau = 1 / (2 sigma_t^2)`` (1 when the matching sigma is zero).

    Returns
    -------
    dgraph : DistributedPoseGraph
        Partitioned into ``params.n_nodes`` contiguous blocks.
    truth : Poses
    """
    params = CubeParams(**kw) if params is None else params
    rng = np.random.default_rng(params.seed)
    n = params.n_poses
    cells, dirs = _walk(rng, params.grid, n)
    t_true = cells.astype(float) * params.side_length
    R_true = _frames(rng, dirs)
    odo = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    cand = cube_candidates(t_true, params.side_length)
    keep = rng.random(len(cand)) < params.loop_prob
    pairs = np.concatenate([odo, cand[keep]], axis=0).astype(np.int64)
    m = len(pairs)
    i, j = pairs[:, 0], pairs[:, 1]
    Ri = R_true[i]
    t_meas = np.einsum("mba,mb->ma", Ri, t_true[j] - t_true[i])
    R_meas = np.swapaxes(Ri, 1, 2) @ R_true[j]
    if params.sigma_t > 0:
        t_meas = t_meas + rng.normal(0.0, params.sigma_t / np.sqrt(3.0), size=(m, 3))
    R_meas = R_meas @ _noise_rotations(rng, m, params.sigma_R)
    kappa = 1.0 / (2.0 * params.sigma_R**2) if params.sigma_R > 0 else 1.0
    tau = 1.0 / (2.0 * params.sigma_t**2) if params.sigma_t > 0 else 1.0
    edges = EdgeSet(i, j, t_meas, R_meas, np.full(m, kappa), np.full(m, tau))
    graph = PoseGraph(3, n, edges)
    graph.candidate_count = len(cand)
    graph.odometry_count = len(odo)
    return DistributedPoseGraph.contiguous(graph, params.n_nodes), Poses(t_true, R_true)


def random_problem(rng, n=8, d=2, n_nodes=2, extra_edges=6, noise=0.1, spread=2.0):
    """Small random connected problem for tests and examples.

    A chain of odometry edges plus ``extra_edges`` random non-sequential
    edges, measured from random ground-truth poses with Gaussian noise.

    Returns
    -------
    dgraph : DistributedPoseGraph
    truth : Poses
    """
    rng = np.random.default_rng(rng)
    t = rng.normal(scale=spread, size=(n, d))
    R = random_rotations(rng, n, d)
    pairs = [(k, k + 1) for k in range(n - 1)]
    while len(pairs) < n - 1 + extra_edges and n > 2:
        a, b = rng.integers(0, n, size=2)
        if a != b:
            pairs.append((int(a), int(b)))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    m = len(pairs)
    t_meas = np.einsum("mba,mb->ma", R[i], t[j] - t[i]) + noise * rng.normal(size=(m, d))
    w = noise * rng.normal(size=(m, 1 if d == 2 else 3))
    R_meas = np.swapaxes(R[i], 1, 2) @ R[j] @ exp_so(w, d)
    edges = EdgeSet(i, j, t_meas, R_meas, rng.uniform(0.5, 2.0, m), rng.uniform(0.5, 2.0, m))
    graph = PoseGraph(d, n, edges)
    return DistributedPoseGraph.contiguous(graph, min(n_nodes, n)), Poses(t, R)
