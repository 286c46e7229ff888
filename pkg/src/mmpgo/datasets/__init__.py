"""Dataset ingestion, partitioning, simulation and initialization."""

import os

from .cube import CubeParams, cube_candidates, generate_cube, random_problem
from .g2o import G2OParseError, load_g2o, parse_g2o, serialize_g2o, write_g2o, write_vertices
from .init import chordal_initialize, initialize, odometry_initialize
from .partition import PartitionSpec, partition, read_manifest, write_manifest

DATA_ENV = "DPGO_DATA"


def find_dataset(name):
    """Path of benchmark ``name`` (e.g. ``"M3500"``) under ``$DPGO_DATA``, or None."""
    root = os.environ.get(DATA_ENV)
    if not root:
        return None
    for cand in (name, f"{name}.g2o", f"{name.lower()}.g2o", f"{name.upper()}.g2o"):
        path = os.path.join(root, cand)
        if os.path.isfile(path):
            return path
    return None


__all__ = [
    "CubeParams",
    "DATA_ENV",
    "G2OParseError",
    "PartitionSpec",
    "chordal_initialize",
    "cube_candidates",
    "find_dataset",
    "generate_cube",
    "initialize",
    "load_g2o",
    "odometry_initialize",
    "parse_g2o",
    "partition",
    "random_problem",
    "read_manifest",
    "serialize_g2o",
    "write_g2o",
    "write_manifest",
    "write_vertices",
]
