import io

import numpy as np
import pytest

from nehari_cone.energy import EnergyModel
from nehari_cone.flow import (
    descend,
    dirichlet_limit_profile,
    fixed_point_residual,
    newton_critical_point,
    solve_T,
    tilde_T,
    trace_csv,
)
from nehari_cone.params import RadialGrid, in_cone, make_params


def make_model(p, q, N=1, M=512, ell=None):
    return EnergyModel(make_params(p, q, N, ell), RadialGrid.uniform(M, N))


@pytest.fixture(scope="module")
def model():
    return EnergyModel(make_params(1.97, 40.0, 1, 3.0), RadialGrid.uniform(512, 1))


def test_solve_T_constants(model):
    n = model.grid.size
    assert np.all(solve_T(model, np.zeros(n)) == 0.0)
    for c in (0.1, 1.0, 7.0):
        np.testing.assert_allclose(solve_T(model, np.full(n, c)), c ** (1 / (model.p - 1)), rtol=1e-12)


def test_tilde_T_of_constants(model):
    n = model.grid.size
    np.testing.assert_array_equal(tilde_T(model, np.ones(n)), np.ones(n))
    v = tilde_T(make_model(1.97, 10.0), np.full(513, 0.5))
    np.testing.assert_allclose(v, 0.5 ** (9 / 0.97), rtol=1e-12)


def test_solve_T_residual_and_stack(model, rng):
    n = model.grid.size
    W = np.sort(rng.uniform(0.0, 3.0, (4, n)), axis=1)
    V = solve_T(model, W)
    for w, v in zip(W, V):
        res = model.operator_weak(v) - model.grid.weights * w
        assert np.max(np.abs(res)) < 1e-10 * max(1.0, np.max(np.abs(v)))
        np.testing.assert_allclose(solve_T(model, w), v, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("p", [1.3, 1.6, 1.97])
def test_solve_T_preserves_cone(p, rng):
    m = make_model(p, 20.0, N=2, M=256)
    for _ in range(5):
        w = np.sort(rng.uniform(0.0, 2.0, m.grid.size))
        assert in_cone(solve_T(m, w), 1e-12)


def test_solve_T_second_order_on_manufactured_solution():
    p = 1.97
    errs = []
    for M in (128, 256, 512, 1024):
        m = make_model(p, 40.0, M=M)
        r = m.grid.nodes
        v = 1.0 + 0.2 * (r**3 - 1.5 * r**4 + 0.6 * r**5)  # v' = 0.6 r^2 (1 - r)^2 vanishes at both ends
        dv = 0.6 * r**2 * (1 - r) ** 2
        d2v = 1.2 * r * (1 - r) * (1 - 2 * r)
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = np.where(dv > 0, (p - 1) * dv ** (p - 2) * d2v, 0.0)
        w = -lap + v ** (p - 1)
        errs.append(np.max(np.abs(solve_T(m, w) - v)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), rates


def test_dirichlet_profile_is_increasing_and_matches_boundary():
    m = make_model(1.5, 40.0, M=1024, ell=2.5)
    G = dirichlet_limit_profile(m)
    assert G[-1] == 1.0
    assert 0.0 < G[0] < 1.0
    assert in_cone(G)


def test_descend_from_constant_is_immediate(model):
    st = descend(model, np.ones(model.grid.size))
    assert st.converged and st.iter == 0


def test_descend_zero_field(model):
    st = descend(model, np.zeros(model.grid.size))
    assert st.converged and st.energy == 0.0


def test_descend_reaches_nonconstant_fixed_point(model):
    st = descend(model, 0.3 + model.grid.nodes, stop=1e-8, on_nehari=True)
    assert st.converged
    assert st.u[0] < 1.0 < st.u[-1]
    assert np.all(np.diff(st.energies) <= 0.0)
    assert in_cone(st.u)
    assert fixed_point_residual(model, st.u) < 1e-8
    assert np.max(np.abs(model.gradient(st.u))) < 1e-5


def test_descend_without_projection_energy_monotone(model):
    st = descend(model, 0.5 + 0.2 * model.grid.nodes**2, stop=1e-8, max_iter=200)
    assert np.all(np.diff(st.energies) <= 0.0)
    assert in_cone(st.u, 1e-12)
    assert st.energy < model.energy(0.5 + 0.2 * model.grid.nodes**2)


def test_unprojected_runaway_stops_cleanly(model):
    with np.errstate(all="ignore"):
        st = descend(model, 0.9 + 0.2 * model.grid.nodes**2, stop=1e-8, max_iter=200)
    assert not st.converged
    assert np.all(np.diff(st.energies) <= 0.0)


def test_descend_flags_max_iter(model):
    st = descend(model, 0.3 + model.grid.nodes, stop=1e-14, max_iter=2, on_nehari=True)
    assert not st.converged and st.iter == 2 and "max_iter" in st.reason


def test_trace_csv(model):
    text = trace_csv(model, 0.3 + model.grid.nodes, stop=1e-6, on_nehari=True)
    lines = text.strip().splitlines()
    assert lines[0] == "iter,energy,residual_norm,step"
    assert len(lines) >= 3
    buf = io.StringIO()
    descend(model, 0.3 + model.grid.nodes, stop=1e-6, on_nehari=True, trace=buf)
    assert buf.getvalue() == text


def test_newton_critical_point_polishes(model):
    st = descend(model, 0.3 + model.grid.nodes, stop=1e-5, on_nehari=True)
    u, it = newton_critical_point(model, st.u)
    assert np.max(np.abs(model.first_variation(u))) < 1e-11
    assert np.max(np.abs(u - st.u)) < 1e-3
