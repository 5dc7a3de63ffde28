import csv
import io

import numpy as np
import pytest

from nehari_cone.energy import EnergyModel
from nehari_cone.nehari import (
    SolutionRecord,
    asymptotic_study,
    check_local_min_at_1,
    make_record,
    minimize_on_nehari,
    seed_fields,
)
from nehari_cone.params import RadialGrid, in_cone, make_params


def test_below_fold_ground_state_is_constant(small_grid):
    P = make_params(1.97, 3.0, 1, 2.5)
    rec = minimize_on_nehari(P, 6, small_grid)
    assert np.max(np.abs(rec.u - 1.0)) < 1e-6
    assert rec.energy == pytest.approx(2 * (1 / P.p - 1 / P.q), rel=1e-8)


def test_ground_state_above_fold(ground40, model40):
    rec = ground40
    E1 = float(model40.energy(np.ones(model40.grid.size)))
    assert rec.accepted()
    assert rec.provenance == "variational"
    assert rec.u0 < 1.0 < rec.u1
    assert rec.energy < E1 - 1e-4
    assert rec.meta["certified"]
    assert rec.grad_norm < 1e-8
    assert in_cone(rec.u)


def test_ground_state_is_lowest_start(ground40):
    assert all(ground40.energy <= e + 1e-12 for e in ground40.meta["start_energies"].values())


def test_record_roundtrip(ground40, tmp_path):
    path = tmp_path / "rec.json"
    ground40.save(path)
    back = SolutionRecord.load(path)
    np.testing.assert_array_equal(back.u, ground40.u)
    assert back.energy == ground40.energy and back.provenance == "variational"
    assert back.params == ground40.params


def test_make_record_rejects_unknown_provenance(model40):
    with pytest.raises(ValueError):
        make_record(model40, np.ones(model40.grid.size), "guess")


def test_seed_fields_are_cone_fields(small_grid):
    seeds = seed_fields(small_grid, G=np.linspace(0.6, 1.0, small_grid.size), n_perturbed=4, seed=3)
    assert len(seeds) == 10
    assert len({name for name, _ in seeds}) == 10
    for _, f in seeds:
        assert in_cone(f)


def test_threads_do_not_change_result(monkeypatch, small_grid):
    P = make_params(1.97, 40.0, 1, 3.0)
    monkeypatch.setenv("NEHARI_THREADS", "1")
    a = minimize_on_nehari(P, 6, small_grid)
    monkeypatch.setenv("NEHARI_THREADS", "3")
    b = minimize_on_nehari(P, 6, small_grid)
    np.testing.assert_array_equal(a.u, b.u)


def test_constant_is_local_min_in_the_moderate_regime():
    P = make_params(1.5, 40.0, 1, 2.5)
    diag = check_local_min_at_1(P, 200, 0.05, seed=7)
    assert diag.n_valid == 200
    assert diag.all_above and diag.M_q > 0
    assert np.all(diag.distances <= 0.05)
    assert np.isfinite(diag.pw_ratio) and diag.pw_change < 0.25


def test_local_min_sampler_is_seeded():
    P = make_params(1.5, 40.0, 1, 2.5)
    a = check_local_min_at_1(P, 50, 0.05, seed=1)
    b = check_local_min_at_1(P, 50, 0.05, seed=1)
    assert a.to_dict() == b.to_dict()
    with pytest.raises(ValueError):
        check_local_min_at_1(P, 50, 1.5)


def test_asymptotic_table(small_grid):
    P = make_params(1.97, 50.0, 1, 3.0)
    table = asymptotic_study(P, [50.0, 100.0], small_grid, multistart=6)
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert rows[0] == list(table.COLUMNS)
    assert len(rows) == 3
    assert np.all(np.diff(table.column("sup_dist_G")) < 0)
    with pytest.raises(ValueError):
        asymptotic_study(P, [100.0, 50.0], small_grid)


def test_multistart_failures_are_reported(small_grid):
    P = make_params(1.97, 40.0, 1, 3.0)
    rec = minimize_on_nehari(P, 6, small_grid, max_iter=3)
    assert isinstance(rec.meta["failed"], dict)
    assert rec.accepted()
    m = EnergyModel(P, small_grid)
    assert rec.energy <= float(m.energy(np.ones(small_grid.size)))
