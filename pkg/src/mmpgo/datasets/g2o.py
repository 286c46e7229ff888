"""Reading and writing g2o pose-graph files.

Supported records: ``VERTEX_SE2``, ``EDGE_SE2``, ``VERTEX_SE3:QUAT`` and
``EDGE_SE3:QUAT``. ``FIX`` lines, blank lines and ``#`` comments are skipped.

Information matrices are reduced to the isotropic weights of the objective:
``tau`` is the mean of the translational diagonal entries and ``kappa`` the
mean of the rotational ones.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from .._linalg import rot2
from ..graph import EdgeSet, GraphError, PoseGraph, Poses


class G2OParseError(GraphError):
    pass


_SE2_DIAG = (0, 3, 5)  # I11, I22, I33 in the 6 upper-triangular entries
_SE3_DIAG = (0, 6, 11, 15, 18, 20)  # of the 21 upper-triangular entries


def _floats(tokens, k, lineno, tag):
    if len(tokens) < k:
        raise G2OParseError(f"line {lineno}: {tag} expects {k} values, got {len(tokens)}")
    try:
        return [float(x) for x in tokens[:k]]
    except ValueError:
        raise G2OParseError(f"line {lineno}: non-numeric value in {tag} record") from None


def _ids(tokens, k, lineno, tag):
    try:
        return [int(x) for x in tokens[:k]]
    except (ValueError, IndexError):
        raise G2OParseError(f"line {lineno}: bad vertex id in {tag} record") from None


def _quat_to_rot(q):
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm < 1e-12):
        raise G2OParseError("zero quaternion")
    return Rotation.from_quat(q).as_matrix()


def parse_g2o(text):
    """Parse g2o text into a centralized :class:`PoseGraph`.

    Vertex ids are mapped to consecutive pose indices in increasing id order.
    Vertex estimates, when every pose has one, become ``graph.initial``.

    Raises
    ------
    G2OParseError
        On malformed records (with the line number) or when 2D and 3D records
        are mixed.
    """
    dim = None
    vert = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, *tok = line.split()
        if tag in ("VERTEX_SE2", "EDGE_SE2"):
            rec_dim = 2
        elif tag in ("VERTEX_SE3:QUAT", "EDGE_SE3:QUAT"):
            rec_dim = 3
        elif tag == "FIX":
            continue
        else:
            raise G2OParseError(f"line {lineno}: unsupported record {tag!r}")
        if dim is None:
            dim = rec_dim
        elif dim != rec_dim:
            raise G2OParseError(f"line {lineno}: mixed 2D and 3D records")
        if tag == "VERTEX_SE2":
            (vid,) = _ids(tok, 1, lineno, tag)
            x, y, th = _floats(tok[1:], 3, lineno, tag)
            vert[vid] = (np.array([x, y]), th)
        elif tag == "VERTEX_SE3:QUAT":
            (vid,) = _ids(tok, 1, lineno, tag)
            v = _floats(tok[1:], 7, lineno, tag)
            vert[vid] = (np.array(v[:3]), np.array(v[3:]))
        elif tag == "EDGE_SE2":
            i, j = _ids(tok, 2, lineno, tag)
            v = _floats(tok[2:], 9, lineno, tag)
            info = v[3:]
            edges.append((lineno, i, j, np.array(v[:2]), v[2], np.mean([info[0], info[3]]), info[5]))
        else:
            i, j = _ids(tok, 2, lineno, tag)
            v = _floats(tok[2:], 28, lineno, tag)
            info = v[7:]
            tau = np.mean([info[k] for k in _SE3_DIAG[:3]])
            kappa = np.mean([info[k] for k in _SE3_DIAG[3:]])
            edges.append((lineno, i, j, np.array(v[:3]), np.array(v[3:7]), tau, kappa))
    if dim is None:
        raise G2OParseError("no pose records found")
    ids = sorted(set(vert) | {e[1] for e in edges} | {e[2] for e in edges})
    index = {v: k for k, v in enumerate(ids)}
    n = len(ids)
    for lineno, i, j, *_ in edges:
        if i == j:
            raise G2OParseError(f"line {lineno}: edge connects vertex {i} to itself")
    for lineno, _, _, _, _, tau, kappa in edges:
        if not (tau > 0 and kappa > 0):
            raise G2OParseError(f"line {lineno}: information matrix has a nonpositive diagonal")
    m = len(edges)
    ei = np.array([index[e[1]] for e in edges], dtype=np.int64)
    ej = np.array([index[e[2]] for e in edges], dtype=np.int64)
    et = np.array([e[3] for e in edges]).reshape(m, dim)
    if dim == 2:
        eR = rot2(np.array([e[4] for e in edges])) if m else np.zeros((0, 2, 2))
    else:
        eR = _quat_to_rot(np.array([e[4] for e in edges])) if m else np.zeros((0, 3, 3))
    tau = np.array([e[5] for e in edges], dtype=float)
    kappa = np.array([e[6] for e in edges], dtype=float)
    es = EdgeSet(ei, ej, et, eR, kappa, tau)
    initial = None
    if vert and len(vert) == n:
        t = np.array([vert[v][0] for v in ids])
        if dim == 2:
            R = rot2(np.array([vert[v][1] for v in ids]))
        else:
            R = _quat_to_rot(np.array([vert[v][1] for v in ids]))
        initial = Poses(t, R).project()
    return PoseGraph(dim, n, es, initial, names=np.array(ids, dtype=np.int64))


def load_g2o(path):
    with open(path, encoding="utf-8") as fh:
        return parse_g2o(fh.read())


def _fmt(x):
    return repr(float(x))


def _vertex_lines(X, names=None):
    ids = np.arange(X.n) if names is None else names
    lines = []
    if X.d == 2:
        th = np.arctan2(X.R[:, 1, 0], X.R[:, 0, 0])
        for k in range(X.n):
            lines.append(f"VERTEX_SE2 {ids[k]} {_fmt(X.t[k, 0])} {_fmt(X.t[k, 1])} {_fmt(th[k])}")
    else:
        q = Rotation.from_matrix(X.R).as_quat()
        for k in range(X.n):
            vals = " ".join(_fmt(v) for v in (*X.t[k], *q[k]))
            lines.append(f"VERTEX_SE3:QUAT {ids[k]} {vals}")
    return lines


def serialize_g2o(graph, X=None):
    """g2o text for ``graph`` with vertex estimates ``X`` (default ``graph.initial``).

    Information matrices are written diagonal with ``tau`` on translation and
    ``kappa`` on rotation so that :func:`parse_g2o` recovers the weights.
    """
    names = graph.names
    ids = np.arange(graph.n) if names is None else names
    X = graph.initial if X is None else X
    lines = _vertex_lines(X, ids) if X is not None else []
    e = graph.edges
    if graph.d == 2:
        th = np.arctan2(e.R[:, 1, 0], e.R[:, 0, 0])
        for k in range(len(e)):
            tau, kap = _fmt(e.tau[k]), _fmt(e.kappa[k])
            lines.append(
                f"EDGE_SE2 {ids[e.i[k]]} {ids[e.j[k]]} {_fmt(e.t[k, 0])} {_fmt(e.t[k, 1])} {_fmt(th[k])} "
                f"{tau} 0 0 {tau} 0 {kap}"
            )
    else:
        q = Rotation.from_matrix(e.R).as_quat() if len(e) else np.zeros((0, 4))
        for k in range(len(e)):
            info = np.zeros(21)
            info[list(_SE3_DIAG[:3])] = e.tau[k]
            info[list(_SE3_DIAG[3:])] = e.kappa[k]
            vals = " ".join(_fmt(v) for v in (*e.t[k], *q[k]))
            inf = " ".join(_fmt(v) if v else "0" for v in info)
            lines.append(f"EDGE_SE3:QUAT {ids[e.i[k]]} {ids[e.j[k]]} {vals} {inf}")
    return "\n".join(lines) + "\n"


def write_g2o(graph, path, X=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_g2o(graph, X))


def write_vertices(X, path, names=None):
    """Write poses as g2o ``VERTEX`` records only."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(_vertex_lines(X, names)) + "\n")
