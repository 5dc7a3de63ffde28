import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nehari_cone.params import (
    ParameterError,
    RadialGrid,
    SolverConfig,
    ball_measure,
    cone_project,
    critical_exponent,
    in_cone,
    integrate,
    make_params,
    s0_threshold,
    sphere_measure,
    w1p_norm,
)


def pav_oracle(y, w):
    """Textbook pool-adjacent-violators followed by clipping at zero."""
    blocks = []
    for yi, wi in zip(y, w):
        blocks.append([yi * wi, wi, 1])
        while len(blocks) > 1 and blocks[-2][0] / blocks[-2][1] > blocks[-1][0] / blocks[-1][1]:
            s, ww, n = blocks.pop()
            blocks[-1][0] += s
            blocks[-1][1] += ww
            blocks[-1][2] += n
    out = np.concatenate([np.full(n, s / ww) for s, ww, n in blocks])
    return np.maximum(out, 0.0)


def test_sphere_measures():
    assert sphere_measure(1) == pytest.approx(2.0)
    assert sphere_measure(2) == pytest.approx(2 * math.pi)
    assert ball_measure(3) == pytest.approx(4 * math.pi / 3)


def test_critical_exponent():
    assert critical_exponent(1.5, 3) == pytest.approx(3.0)
    assert critical_exponent(1.97, 1) == math.inf


@pytest.mark.parametrize(
    "p,q,N,ell",
    [(2.5, 40, 1, 3), (1.0, 40, 1, 3), (1.97, 2.0, 1, 1.99), (1.97, 40, 1, 1.9), (1.97, 3, 1, 3.5), (1.5, 40, 3, 3.2)],
)
def test_make_params_rejects(p, q, N, ell):
    with pytest.raises(ParameterError):
        make_params(p, q, N, ell)


def test_make_params_defaults():
    P = make_params(1.97, 40, 1)
    assert 1.97 < P.ell < 3.97
    assert P.s0 == s0_threshold(1.97, 1)
    assert P.s0 >= 2 + P.p_conj ** (1 / P.p)
    with pytest.raises(ParameterError):
        make_params(1.97, 40, 1, s0_override=2.0)
    assert make_params(1.97, 40, 1, s0_override=50.0).s0 == 50.0


def test_config_roundtrip(tmp_path):
    cfg = SolverConfig(p=1.8, q=30.0, M=256)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SolverConfig.from_file(path) == cfg
    path.write_text(json.dumps({"p": 1.8, "bogus": 1}))
    with pytest.raises(ParameterError):
        SolverConfig.from_file(path)


@pytest.mark.parametrize("N", [1, 2, 3, 5])
def test_weights_exact_for_constants_and_r(N):
    g = RadialGrid.uniform(64, N)
    assert integrate(g, np.ones(g.size)) == pytest.approx(ball_measure(N), rel=1e-13)
    assert integrate(g, g.nodes) == pytest.approx(sphere_measure(N) / (N + 1), rel=1e-13)
    assert g.cell_weights.sum() == pytest.approx(ball_measure(N), rel=1e-13)


def test_w1p_norm_of_constant():
    g = RadialGrid.uniform(128, 2)
    assert w1p_norm(g, np.full(g.size, 2.0), 1.5) == pytest.approx(2.0 * ball_measure(2) ** (1 / 1.5))


def test_in_cone():
    assert in_cone([0.0, 0.5, 0.5, 1.0])
    assert not in_cone([0.0, 0.6, 0.5])
    assert not in_cone([-0.1, 0.0])
    assert not in_cone([0.0, np.nan])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=40), st.integers(0, 2**32 - 1))
def test_cone_project_matches_pav(values, seed):
    y = np.array(values)
    w = np.random.default_rng(seed).uniform(0.1, 2.0, y.size)
    got = cone_project(y, w)
    assert in_cone(got)
    np.testing.assert_allclose(got, pav_oracle(y, w), atol=1e-10)


def test_cone_project_is_a_projection(rng):
    g = RadialGrid.uniform(200, 1)
    y = rng.normal(size=g.size).cumsum() * 0.1
    x = cone_project(y, g.weights)
    np.testing.assert_array_equal(cone_project(x, g.weights), x)
    # variational inequality <y - x, z - x>_m <= 0 for cone elements z
    for _ in range(20):
        z = np.sort(rng.uniform(0, 2, g.size))
        assert np.sum(g.weights * (y - x) * (z - x)) <= 1e-10


def test_cone_project_stack():
    y = np.array([[1.0, 0.0, 2.0], [0.0, -1.0, -2.0]])
    out = cone_project(y)
    np.testing.assert_allclose(out, [[0.5, 0.5, 2.0], [0.0, 0.0, 0.0]])
