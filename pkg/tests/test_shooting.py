import csv
import io
import json

import numpy as np
import pytest

from nehari_cone.energy import EnergyModel
from nehari_cone.flow import dirichlet_limit_profile
from nehari_cone.params import RadialGrid, make_params
from nehari_cone.shooting import (
    find_neumann_roots,
    neumann_defect,
    plot_branch_svg,
    shoot,
    solve_G,
    trace_branch,
)


@pytest.fixture(scope="module")
def roots40(params40, grid):
    return find_neumann_roots(params40, (0.0, 1.1), 200, grid=grid)


def test_constant_start_stays_constant(params40, grid):
    s = shoot(1.0, params40, grid=grid)
    assert np.all(s.u == 1.0) and s.up_end == 0.0 and s.energy_gap == 0.0


def test_start_below_one_increases_near_origin(params40, grid):
    s = shoot(0.8, params40, grid=grid)
    assert s.u[10] > s.u[0]
    with pytest.raises(ValueError):
        shoot(0.0, params40)


def test_defect_sign_change_brackets_root(params40, roots40):
    lower = next(s for s in roots40 if s.monotone and s.e0 < -1e-3)
    assert np.sign(neumann_defect(params40, lower.e0 - 1e-3)) != np.sign(neumann_defect(params40, lower.e0 + 1e-3))


def test_two_monotone_roots_below_one_plus_constant(roots40):
    mono = [s for s in roots40 if s.monotone]
    below = [s for s in mono if s.e0 < 0]
    assert len(below) == 2
    assert any(s.e0 == 0.0 for s in mono)
    lower, upper = below
    assert lower.d == pytest.approx(0.7229253721, abs=1e-8)
    assert -1e-15 < upper.e0 < 0.0
    for s in below:
        assert abs(s.up_end) < 1e-6
        assert s.offset[-1] > 0.0


def test_lower_root_is_below_constant_energy(roots40):
    lower = next(s for s in roots40 if s.monotone and s.e0 < 0)
    assert lower.energy_gap < -1e-2


def test_below_fold_only_constant(grid):
    P = make_params(1.97, 3.0, 1, 2.5)
    shots = find_neumann_roots(P, (0.0, 1.1), 200, grid=grid, monotone_only=True)
    assert [s.e0 for s in shots] == [0.0]


def test_first_integral_conserved_in_one_dimension(roots40):
    for s in roots40:
        if s.monotone and s.e0 != 0.0:
            assert np.max(np.abs(s.H_trace - s.H_trace[0])) < 1e-8


def test_first_integral_nonincreasing_in_two_dimensions():
    P = make_params(1.97, 40.0, 2, 3.0)
    g = RadialGrid.uniform(2048, 2)
    shots = [s for s in find_neumann_roots(P, (0.0, 1.0), 120, grid=g) if s.monotone and s.e0 < 0]
    assert len(shots) == 2
    for s in shots:
        assert np.max(np.diff(s.H_trace)) < 1e-8


def test_truncation_does_not_change_monotone_roots(params40, roots40):
    a = [s.e0 for s in roots40 if s.monotone]
    b = [s.e0 for s in find_neumann_roots(params40, (0.0, 1.1), 200, use_truncation=True, monotone_only=True)]
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_G_matches_constrained_minimizer(params40, model40, G_discrete):
    G = solve_G(params40, model40.grid)
    assert 0.0 < G.d < 1.0
    c_min = float(model40.norm_p(G_discrete)) / params40.p
    assert G.c_inf == pytest.approx(c_min, rel=1e-4)
    assert np.max(np.abs(G.u - G_discrete)) < 1e-4


def test_G_in_two_dimensions():
    P = make_params(1.6, 20.0, 2, 2.5)
    g = RadialGrid.uniform(1024, 2)
    G = solve_G(P, g)
    G_min = dirichlet_limit_profile(EnergyModel(P, g))
    assert np.max(np.abs(G.u - G_min)) < 1e-3


@pytest.fixture(scope="module")
def short_branch(params40):
    return trace_branch(params40, (12.0, 16.0), 9, grid=RadialGrid.uniform(512, 1))


def test_branch_fold_and_labels(short_branch):
    assert 12.0 < short_branch.fold_q < 16.0
    lower, upper = short_branch.by_label("lower"), short_branch.by_label("upper")
    assert len(lower) == len(upper) > 0
    for a, b in zip(lower, upper):
        assert a.d < b.d < 1.0
    assert not short_branch.missing


def test_branch_csv_schema(short_branch):
    text = short_branch.to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["q", "d", "u_end", "energy", "label"]
    assert {r[4] for r in rows[1:]} == {"lower", "upper", "constant"}


def test_branch_deterministic(params40, short_branch):
    again = trace_branch(params40, (12.0, 16.0), 9, grid=RadialGrid.uniform(512, 1))
    assert again.to_csv() == short_branch.to_csv()


def test_branch_below_fold_only_constant_rows(params40):
    br = trace_branch(params40, (3.0, 6.0), 4, grid=RadialGrid.uniform(256, 1))
    assert br.fold_q is None and not br.missing
    assert {pt.label for pt in br.points} == {"constant"}
    assert json.loads(br.to_json())["schema"] == 1


def test_branch_svg(short_branch, tmp_path):
    out = tmp_path / "b.svg"
    plot_branch_svg(short_branch, out, g0=0.652)
    first = out.read_bytes()
    assert first.startswith(b"<?xml")
    plot_branch_svg(short_branch, out, g0=0.652)
    assert out.read_bytes() == first
