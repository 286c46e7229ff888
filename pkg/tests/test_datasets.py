import os

import numpy as np
import pytest

from conftest import make_graph
from mmpgo._linalg import rot2
from mmpgo.datasets import (
    CubeParams,
    G2OParseError,
    PartitionSpec,
    chordal_initialize,
    find_dataset,
    generate_cube,
    initialize,
    load_g2o,
    odometry_initialize,
    parse_g2o,
    partition,
    random_problem,
    read_manifest,
    serialize_g2o,
    write_manifest,
)
from mmpgo.graph import GraphError, Poses
from mmpgo.kernels import Trivial
from mmpgo.objective import objective_value

MINIMAL_SE2 = """VERTEX_SE2 0 0 0 0
VERTEX_SE2 1 1 0 0.5
EDGE_SE2 0 1 1.0 0.25 0.5 1 0 0 1 0 1
"""


def dataset_or_fail(name):
    path = find_dataset(name)
    if path is None:
        pytest.fail(f"benchmark {name} not found; set DPGO_DATA to a directory containing {name}.g2o")
    return path


# --------------------------------------------------------------------- g2o


def test_minimal_file():
    g = parse_g2o(MINIMAL_SE2)
    assert (g.n, g.m, g.d) == (2, 1, 2)
    e = g.edges
    assert e.kappa[0] == 1.0 and e.tau[0] == 1.0
    np.testing.assert_array_equal(e.t[0], [1.0, 0.25])
    np.testing.assert_allclose(e.R[0], rot2(0.5), atol=1e-15)
    np.testing.assert_allclose(g.initial.t[1], [1.0, 0.0])


def test_info_reduction():
    g = parse_g2o("EDGE_SE2 0 1 1 0 0 4 0.3 0 2 0 7\n")
    assert g.edges.tau[0] == 3.0 and g.edges.kappa[0] == 7.0
    info = " ".join(["1"] + ["0"] * 5 + ["2"] + ["0"] * 4 + ["3"] + ["0"] * 3 + ["4"] + ["0"] * 2 + ["5", "0", "6"])
    g = parse_g2o(f"EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 {info}\n")
    assert g.edges.tau[0] == 2.0 and g.edges.kappa[0] == 5.0


@pytest.mark.parametrize("d", [2, 3])
def test_round_trip(d, rng):
    dg, truth = random_problem(rng, n=12, d=d, n_nodes=1)
    text = serialize_g2o(dg.graph, truth)
    g = parse_g2o(text)
    a, b = dg.edges, g.edges
    for name in ("i", "j"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    for name in ("t", "R", "kappa", "tau"):
        np.testing.assert_allclose(getattr(b, name), getattr(a, name), rtol=0, atol=1e-12)
    np.testing.assert_allclose(g.initial.t, truth.t, atol=1e-12)
    np.testing.assert_allclose(g.initial.R, truth.R, atol=1e-12)


def test_sparse_ids_and_comments():
    g = parse_g2o("# header\nVERTEX_SE2 10 0 0 0\n\nVERTEX_SE2 4 1 0 0\nFIX 4\nEDGE_SE2 10 4 1 0 0 1 0 0 1 0 1\n")
    np.testing.assert_array_equal(g.names, [4, 10])
    assert (g.edges.i[0], g.edges.j[0]) == (1, 0)


@pytest.mark.parametrize(
    "text,lineno",
    [
        ("VERTEX_SE2 0 0 0 0\nEDGE_SE2 0 1 1 0\n", 2),
        ("VERTEX_SE2 0 0 x 0\n", 1),
        ("VERTEX_SE2 0 0 0 0\nVERTEX_XYZ 1 0 0\n", 2),
        ("EDGE_SE2 0 0 1 0 0 1 0 0 1 0 1\n", 1),
        ("EDGE_SE2 0 1 1 0 0 0 0 0 0 0 1\n", 1),
    ],
)
def test_parse_errors_report_line(text, lineno):
    with pytest.raises(G2OParseError, match=f"line {lineno}"):
        parse_g2o(text)


def test_mixed_dimensions():
    with pytest.raises(G2OParseError, match="mixed"):
        parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n")


def test_load_from_file(tmp_path):
    p = tmp_path / "x.g2o"
    p.write_text(MINIMAL_SE2)
    assert load_g2o(str(p)).m == 1


# --------------------------------------------------------------- partition


def chain(n, d=2):
    return make_graph(d, n, [(k, k + 1, [1.0, 0.0], np.eye(2), 1.0, 1.0) for k in range(n - 1)]).graph


def test_partition_examples():
    dg = partition(chain(3600), 10)
    np.testing.assert_array_equal(dg.sizes, [360] * 10)
    assert dg.locate(359)[0] == 0 and dg.locate(360)[0] == 1
    dg = partition(chain(5), PartitionSpec(1))
    assert not dg.inter.any() and dg.neighbors == [[]]


def test_partition_preserves_edges(rng):
    dg, _ = random_problem(rng, n=30, d=3, n_nodes=1, extra_edges=20)
    for nn in (1, 4, 7):
        p = partition(dg.graph, nn)
        assert p.sizes.sum() == 30
        assert p.edges is dg.edges
        ids = np.sort(np.concatenate([p.intra_edges(), p.inter_edges()]))
        np.testing.assert_array_equal(ids, np.arange(dg.m))
        e = p.edges
        assert np.all(p.node_of[e.i[p.inter]] != p.node_of[e.j[p.inter]])


def test_partition_errors():
    with pytest.raises(GraphError):
        PartitionSpec(0)
    with pytest.raises(GraphError):
        partition(make_graph(2, 3, [(0, 1, [1, 0], np.eye(2), 1, 1)]).graph, 2)


def test_manifest_roundtrip(tmp_path):
    dg = partition(chain(11), 3)
    path = str(tmp_path / "m.json")
    write_manifest(dg, path)
    assert read_manifest(path) == [4, 4, 3]


# -------------------------------------------------------------------- cube


def test_cube_defaults():
    dg, truth = generate_cube()
    g = dg.graph
    assert g.n == 3600 and truth.n == 3600
    assert g.odometry_count == 3599
    np.testing.assert_array_equal(g.edges.i[:3599], np.arange(3599))
    np.testing.assert_array_equal(g.edges.j[:3599], np.arange(1, 3600))
    assert g.is_connected()
    step = np.linalg.norm(np.diff(truth.t, axis=0), axis=1)
    np.testing.assert_allclose(step, 1.0)
    assert truth.t.min() >= 0 and truth.t.max() <= 11


def test_cube_no_loops():
    dg, _ = generate_cube(CubeParams(loop_prob=0.0, n_poses=500))
    assert dg.m == 499


def test_cube_loop_count_concentration():
    ratios = []
    for seed in range(20):
        dg, _ = generate_cube(seed=seed)
        g = dg.graph
        ratios.append((g.m - g.odometry_count) / g.candidate_count)
    assert abs(np.mean(ratios) - 0.1) <= 0.05 * 0.1


def test_cube_candidates_are_nearby_nonsequential():
    dg, truth = generate_cube(n_poses=400, loop_prob=1.0, seed=4)
    e = dg.edges
    loops = slice(dg.graph.odometry_count, None)
    assert np.all(np.abs(e.j[loops] - e.i[loops]) > 1)
    dist = np.linalg.norm(truth.t[e.i[loops]] - truth.t[e.j[loops]], axis=1)
    assert np.all(dist <= 1.0 + 1e-9)


def test_cube_noise_free():
    dg, truth = generate_cube(n_poses=300, sigma_t=0.0, sigma_R=0.0, seed=2)
    assert objective_value(dg, Trivial(), truth) == 0.0


def test_cube_reproducible():
    a, ta = generate_cube(n_poses=200, seed=7, n_nodes=3)
    b, tb = generate_cube(n_poses=200, seed=7, n_nodes=3)
    assert ta.equals(tb)
    np.testing.assert_array_equal(a.edges.t, b.edges.t)
    np.testing.assert_array_equal(a.sizes, b.sizes)


def test_cube_params_validation():
    with pytest.raises(ValueError):
        CubeParams(loop_prob=1.5)
    with pytest.raises(ValueError):
        CubeParams(sigma_t=-1.0)


def test_cube_noise_calibration():
    dg, truth = generate_cube(n_poses=3000, sigma_t=0.05, sigma_R=0.05, loop_prob=0.0, seed=5)
    e = dg.edges
    Ri = truth.R[e.i]
    t_true = np.einsum("mba,mb->ma", Ri, truth.t[e.j] - truth.t[e.i])
    rmse_t = np.sqrt(np.mean(np.sum((e.t - t_true) ** 2, axis=1)))
    R_err = np.swapaxes(np.swapaxes(Ri, 1, 2) @ truth.R[e.j], 1, 2) @ e.R
    ang = np.arccos(np.clip((np.trace(R_err, axis1=1, axis2=2) - 1) / 2, -1, 1))
    assert rmse_t == pytest.approx(0.05, rel=0.05)
    assert np.sqrt(np.mean(ang**2)) == pytest.approx(0.05, rel=0.05)
    assert e.kappa[0] == pytest.approx(1 / (2 * 0.05**2))


# -------------------------------------------------------------- initialize


@pytest.mark.parametrize("d", [2, 3])
def test_chordal_noise_free(d, rng):
    dg, truth = random_problem(rng, n=25, d=d, n_nodes=1, extra_edges=15, noise=0.0)
    X = chordal_initialize(dg)
    assert objective_value(dg, Trivial(), X) <= 1e-12
    assert np.array_equal(X.t[0], np.zeros(d)) and np.array_equal(X.R[0], np.eye(d))
    assert X.manifold_error() < 1e-10


def test_chordal_single_pose():
    g = make_graph(3, 1, []).graph
    assert chordal_initialize(g).equals(Poses.identity(1, 3))


def test_chordal_beats_odometry_on_cube():
    dg, _ = generate_cube(n_poses=600, grid=6, seed=0)
    F_ch = objective_value(dg, Trivial(), chordal_initialize(dg))
    F_od = objective_value(dg, Trivial(), odometry_initialize(dg))
    assert F_ch < F_od


def test_init_errors():
    g = make_graph(2, 3, [(0, 1, [1, 0], np.eye(2), 1, 1)]).graph
    for how in ("chordal", "odometry"):
        with pytest.raises(GraphError):
            initialize(g, how)
    with pytest.raises(GraphError):
        initialize(chain(3), "vertices")
    with pytest.raises(ValueError):
        initialize(chain(3), "magic")
    assert initialize(chain(3), "identity").equals(Poses.identity(3, 2))


# ------------------------------------------------------- benchmark files


def test_find_dataset(tmp_path, monkeypatch):
    (tmp_path / "toy.g2o").write_text(MINIMAL_SE2)
    monkeypatch.setenv("DPGO_DATA", str(tmp_path))
    assert find_dataset("toy") == os.path.join(str(tmp_path), "toy.g2o")
    assert find_dataset("absent") is None
    monkeypatch.delenv("DPGO_DATA")
    assert find_dataset("toy") is None


def test_csail_counts():
    g = load_g2o(dataset_or_fail("CSAIL"))
    assert (g.n, g.m) == (1045, 1172)


def test_m3500_counts_and_partition():
    g = load_g2o(dataset_or_fail("M3500"))
    assert (g.n, g.m) == (3500, 5453)
    dg = partition(g, 10)
    assert dg.sizes.sum() == 3500
    assert np.all(dg.node_of[g.edges.i[dg.inter]] != dg.node_of[g.edges.j[dg.inter]])


def test_m3500_chordal_sanity():
    g = load_g2o(dataset_or_fail("M3500"))
    F_ch = objective_value(partition(g, 1), Trivial(), chordal_initialize(g))
    F_od = objective_value(partition(g, 1), Trivial(), odometry_initialize(g))
    assert F_ch < F_od
    assert F_ch <= 2 * 2.2311e2
