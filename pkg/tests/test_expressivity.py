import numpy as np
import pytest
from hypothesis import given, strategies as st

from hegnn.expressivity import (
    ConditioningError,
    discriminates,
    discrimination_trials,
    legendre_double_sum,
    neighbor_directions,
    recover_angles,
    sph_sum_check,
)
from hegnn.geomgraph import GeometricGraph, complete_edges, make_kfold, make_structure
from hegnn.specfun import addition_constant, legendre_eval
from hegnn.verify import angle_roundtrip_error

# True/False cells of the spherical-harmonic-sum table, L = 1..30
# columns: tetrahedron, cube, octahedron, dodecahedron, icosahedron
SPH_SUM_TABLE = """
FFFFF FFFFF TFFFF TTTFF FFFFF TTTTT TFFFF TTTFF TFFFF TTTTT
TFFFF TTTTT TFFFF TTTFF TFFFF TTTTT TFFFF TTTTT TFFFF TTTTT
TFFFF TTTTT TFFFF TTTTT TFFFF TTTTT TFFFF TTTTT TFFFF TTTTT
""".split()
POLY = ["tetrahedron", "cube", "octahedron", "dodecahedron", "icosahedron"]


def test_sph_sum_examples():
    assert sph_sum_check(make_structure("cube"), 3)[1] is False
    assert sph_sum_check(make_structure("tetrahedron"), 3)[1] is True
    assert sph_sum_check(make_structure("dodecahedron"), 14)[1] is False


def test_sph_sum_table():
    for L, row in enumerate(SPH_SUM_TABLE, start=1):
        for name, cell in zip(POLY, row):
            norm, verdict = sph_sum_check(make_structure(name), L)
            assert verdict == (cell == "T")
            assert norm > 1 if verdict else norm < 1e-3


def test_sph_sum_rejects_origin_node():
    g = GeometricGraph(np.ones((3, 1)), [[0, 0, 0], [1, 0, 0], [-1, 0, 0]], complete_edges(3))
    with pytest.raises(ValueError):
        sph_sum_check(g, 2)


def test_discriminates_examples():
    assert discriminates(make_structure("tetrahedron"), {3})
    assert not discriminates(make_structure("tetrahedron"), {5})
    assert discriminates(make_structure("icosahedron"), set(range(1, 7)))
    assert discriminates(make_kfold(5), {5})


def test_discrimination_deterministic():
    a = discrimination_trials(make_structure("cube"), [4], trials=3, seed=11)
    b = discrimination_trials(make_structure("cube"), [4], trials=3, seed=11)
    assert a == b


def test_discrimination_requires_symmetry():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 3))
    g = GeometricGraph(np.ones((5, 1)), x - x.mean(axis=0), complete_edges(5))
    with pytest.raises(ValueError):
        discrimination_trials(g, [2], trials=1)
    assert discrimination_trials(g, [2], trials=1, require_symmetric=False)[0].verdict


def test_discrimination_bad_degrees():
    with pytest.raises(ValueError):
        discrimination_trials(make_structure("cube"), [], trials=1)
    with pytest.raises(ValueError):
        discrimination_trials(make_structure("cube"), [0], trials=1)


def test_without_center_node_odd_degrees_cancel():
    # identical nodes on a complete graph: pairwise antisymmetry cancels odd-degree means
    res = discrimination_trials(make_structure("tetrahedron"), [3], trials=2, center_node=False)
    assert all(r.norm < 1e-12 for r in res)


def test_recover_single_angle():
    t = np.cos(0.7)
    z = [addition_constant(1) * legendre_eval(1, t)]
    assert recover_angles(z, 1)[0] == pytest.approx(t, abs=1e-10)


def test_recover_two_angles():
    t = np.cos(np.radians([60.0, 90.0]))
    z = [addition_constant(l) * legendre_eval(l, t).sum() for l in (1, 2)]
    assert np.allclose(recover_angles(z, 2), [0.0, 0.5], atol=1e-8)


def test_recover_square_edge_pairs():
    sq = make_kfold(4).coords
    nbrs = {0: [1, 3], 1: [0, 2]}
    u = neighbor_directions(sq, nbrs[0], 0)
    w = neighbor_directions(sq, nbrs[1], 1)
    truth = np.sort((u @ w.T).ravel())
    z = [addition_constant(l) * legendre_double_sum(u, w, l) for l in range(1, 5)]
    assert np.allclose(recover_angles(z, 4), truth, atol=1e-6)


def test_recover_conditioning_limit():
    with pytest.raises(ConditioningError):
        recover_angles(np.zeros(13), 13)
    with pytest.raises(ValueError):
        recover_angles([1.0], 2)


# distinct cosines at least 0.02 apart, possibly repeated; distinct values much
# closer than the clustering radius are reported as one repeated value
separated = st.lists(st.integers(-50, 50), min_size=1, max_size=6).map(lambda k: [0.02 * i for i in k])


@given(separated, st.floats(-0.004, 0.004), st.floats(0.1, 10))
def test_recover_roundtrip_property(t, shift, scale):
    assert angle_roundtrip_error(np.clip(np.array(t) + shift, -1, 1), scale) < 1e-6


def test_recover_repeated_roots():
    for t in ([0.3] * 6, [0.1, 0.1, -0.7], [1.0, 1.0, -1.0, -1.0], [0.5] * 3 + [0.9] * 3):
        assert angle_roundtrip_error(t) < 1e-6
