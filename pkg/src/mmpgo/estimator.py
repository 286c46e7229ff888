"""Estimator-style front end over the solvers.

>>> from mmpgo.datasets import random_problem
>>> dgraph, _ = random_problem(0, n=6, n_nodes=2)
>>> est = DistributedPGO(n_nodes=2, max_iter=20).fit(dgraph.graph)
>>> est.trace_[-1].F <= est.trace_[0].F
True
"""

import numbers

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .datasets import initialize, load_g2o, partition
from .graph import DistributedPoseGraph, PoseGraph, Poses
from .kernels import parse_kernel
from .objective import objective_value
from .solvers import SolverConfig, run


def check_pose_graph(graph, n_nodes=None):
    """Coerce a path, :class:`PoseGraph` or :class:`DistributedPoseGraph`.

    Returns a connected :class:`DistributedPoseGraph`; an existing partition is
    kept unless ``n_nodes`` asks for a different node count.
    """
    if isinstance(graph, str):
        graph = load_g2o(graph)
    if isinstance(graph, DistributedPoseGraph):
        if n_nodes is None or n_nodes == graph.n_nodes:
            graph.graph.check_connected()
            return graph
        graph = graph.graph
    if not isinstance(graph, PoseGraph):
        raise TypeError(f"expected a pose graph or a g2o path, got {type(graph).__name__}")
    return partition(graph, 1 if n_nodes is None else n_nodes)


def check_poses(X, dgraph, tol=1e-6):
    """Validate an initial iterate against a graph."""
    if not isinstance(X, Poses):
        raise TypeError(f"expected Poses, got {type(X).__name__}")
    if X.n != dgraph.n or X.d != dgraph.d:
        raise ValueError(f"iterate has n={X.n}, d={X.d}; graph has n={dgraph.n}, d={dgraph.d}")
    return X.check_manifold(tol)


class DistributedPGO(BaseEstimator):
    """Distributed pose graph optimization by (accelerated) majorization minimization.

    Parameters
    ----------
    n_nodes : int
        Number of nodes the poses are split among (contiguous blocks).
    method : {"mm", "amm-star", "amm-sharp"}
    kernel : str or LossKernel
        ``trivial``, ``huber:<a>`` or ``welsch:<a>``; applies to inter-node edges.
    eta, xi, zeta, psi, phi : float
        Restart and proximal hyperparameters.
    max_iter : int
    improve_budget : {0, 1}
    init : {"chordal", "vertices", "identity", "odometry"}
        Used when ``fit`` receives no initial iterate.
    force_restart : bool

    Attributes
    ----------
    poses_ : Poses
        Final estimate.
    trace_ : IterationTrace
    objective_ : float
    n_iter_ : int
    graph_ : DistributedPoseGraph
    """

    def __init__(
        self,
        n_nodes=1,
        method="amm-sharp",
        kernel="trivial",
        eta=5e-4,
        xi=1e-10,
        zeta=1.5e-10,
        psi=1e-10,
        phi=1e-6,
        max_iter=1000,
        improve_budget=1,
        init="chordal",
        force_restart=False,
    ):
        self.n_nodes = n_nodes
        self.method = method
        self.kernel = kernel
        self.eta = eta
        self.xi = xi
        self.zeta = zeta
        self.psi = psi
        self.phi = phi
        self.max_iter = max_iter
        self.improve_budget = improve_budget
        self.init = init
        self.force_restart = force_restart

    def _config(self):
        if not isinstance(self.n_nodes, numbers.Integral) or self.n_nodes < 1:
            raise ValueError(f"n_nodes must be a positive integer, got {self.n_nodes!r}")
        return SolverConfig(
            method=self.method,
            kernel=parse_kernel(self.kernel),
            eta=self.eta,
            xi=self.xi,
            zeta=self.zeta,
            psi=self.psi,
            phi=self.phi,
            max_iter=self.max_iter,
            improve_budget=self.improve_budget,
            force_restart=self.force_restart,
        )

    def fit(self, X, y=None, init=None):
        """Optimize the poses of graph ``X``.

        Parameters
        ----------
        X : PoseGraph, DistributedPoseGraph or str
        y : ignored
        init : Poses, optional
            Initial iterate; defaults to the ``init`` strategy.
        """
        cfg = self._config()
        dgraph = check_pose_graph(X, self.n_nodes)
        X0 = initialize(dgraph, self.init) if init is None else check_poses(init, dgraph)
        result = run(dgraph, cfg, X0)
        self.graph_ = dgraph
        self.poses_ = result.X
        self.trace_ = result.trace
        self.objective_ = result.trace[-1].F
        self.n_iter_ = result.trace[-1].iter
        return self

    def score(self, X=None, y=None):
        """Negative objective of the fitted poses (higher is better)."""
        check_is_fitted(self, "poses_")
        dgraph = self.graph_ if X is None else check_pose_graph(X, self.n_nodes)
        return -objective_value(dgraph, parse_kernel(self.kernel), self.poses_)
