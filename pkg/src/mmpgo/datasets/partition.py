"""Contiguous partitioning of a pose graph among nodes, and its manifest."""

import json
from dataclasses import dataclass

from ..graph import DistributedPoseGraph, GraphError


@dataclass(frozen=True)
class PartitionSpec:
    """``n_nodes`` contiguous, near-equal blocks of pose indices."""

    n_nodes: int = 1
    strategy: str = "contiguous"

    def __post_init__(self):
        if self.n_nodes < 1:
            raise GraphError("n_nodes must be at least 1")
        if self.strategy != "contiguous":
            raise GraphError(f"unknown partition strategy {self.strategy!r}")


def partition(graph, spec):
    """Split ``graph`` into a :class:`DistributedPoseGraph`.

    ``spec`` is a :class:`PartitionSpec` or a node count. The graph must be
    connected.
    """
    if not isinstance(spec, PartitionSpec):
        spec = PartitionSpec(int(spec))
    graph.check_connected()
    return DistributedPoseGraph.contiguous(graph, spec.n_nodes)


def write_manifest(dgraph, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dgraph.manifest(), fh, indent=2)
        fh.write("\n")


def read_manifest(path):
    """Node sizes from a manifest written by :func:`write_manifest`."""
    with open(path, encoding="utf-8") as fh:
        man = json.load(fh)
    return [n["last"] - n["first"] + 1 for n in man["nodes"]]
