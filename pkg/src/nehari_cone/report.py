"""Consolidated verification report over all modules.

Every check has a stable name from ``REGISTRY``; checks evaluated per q get
the suffix ``@q=<q>``.  A check is "skipped" when its precondition fails
(for instance no nonconstant solution exists below the fold).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import EnergyModel
from .flow import descend, dirichlet_limit_profile, solve_T, tilde_T
from .mountain_pass import choose_box, PathSurface, estimate_dq, miranda_check, refine_vq, BoxError
from .nehari import check_local_min_at_1, minimize_on_nehari
from .nonlinearity import TruncatedNonlinearity
from .params import (
    ProblemParams,
    RadialGrid,
    ball_measure,
    cone_project,
    derivative,
    in_cone,
    integrate,
    make_params,
    sphere_measure,
    sup_distance,
)
from .shooting import find_neumann_roots, shoot, solve_G

SCHEMA = 1

# name -> short description of the property it measures
REGISTRY = {
    "quadrature_exact": "nodal weights integrate 1 and r exactly",
    "cone_projection": "projection lands in the cone and is idempotent",
    "truncation_c1": "truncated nonlinearity is C1 at s0",
    "constant_critical": "u = 1: zero gradient, zero Nehari residual, fixed point of T~",
    "solve_T_constants": "T maps constants c to c^{1/(p-1)}",
    "nehari_scaling": "h(lambda u) = h(u)/lambda",
    "descent_monotone": "descent energies nonincreasing, iterates in the cone",
    "G_crosscheck": "c_inf from shooting vs constrained minimization",
    "H_first_integral": "first integral along shots (constant for N = 1, nonincreasing otherwise)",
    "monotone_roots": "two nonconstant monotone roots with d < 1 above the fold, none below it",
    "ground_state": "u_q accepted: Nehari residual, cone, u(0) < 1 < u(1), below s0",
    "ground_state_below_constant": "I(u_q) < I(1) - 1e-4",
    "ground_state_certificate": "c_q <= I(h(G) G)",
    "oracle_lower": "u_q vs shooting lower root in sup norm",
    "a_priori_bounds": "sup and slope bounds for every produced solution",
    "refined_bounds": "q-dependent sup and slope bounds for branch solutions",
    "local_min_at_1": "sampled Nehari elements near 1 have energy >= I(1)",
    "pw_ratio_stable": "Poincare-Wirtinger ratio stable under doubling the sample",
    "box_conditions": "R1, R2 satisfy the four box conditions",
    "max_monotone": "max over Q nonincreasing over sweeps",
    "boundary_frozen": "surface boundary equals gamma0 bit for bit",
    "dq_gap": "d_q >= I(1) + 1e-4",
    "miranda_cell": "deformed surface has a sign-crossing cell",
    "third_solution": "v_q accepted with I(v_q) > I(1) + 1e-4 and distinct solutions",
    "oracle_upper": "v_q vs shooting upper root in sup norm",
    "asymptotic_trend": "||u_q - G||_inf decreasing and h_q(G) -> 1 along q",
}


@dataclass
class Check:
    name: str
    anchor: str
    status: str
    measured: float | None
    tolerance: float | None
    detail: str = ""


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass
class VerificationReport:
    params: dict
    checks: list = field(default_factory=list)
    hashes: dict = field(default_factory=dict)

    def add(self, base: str, status, measured=None, tolerance=None, detail="", suffix=""):
        if base not in REGISTRY:
            raise KeyError(f"check {base!r} is not registered")
        if isinstance(status, (bool, np.bool_)):
            status = "pass" if status else "fail"
        name = base + suffix
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check name {name!r}")
        self.checks.append(Check(name, REGISTRY[base], status, _num(measured), _num(tolerance), detail))

    def skip(self, base, why, suffix=""):
        self.add(base, "skipped", detail=why, suffix=suffix)

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failures(self):
        return [c for c in self.checks if c.status == "fail"]

    def to_json(self) -> str:
        data = {
            "schema": SCHEMA,
            "params": self.params,
            "hashes": self.hashes,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
        }
        return json.dumps(data, indent=1, sort_keys=True)


def _sha(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()


def _bounds(p):
    pc = p / (p - 1.0)
    return 1.0 + pc ** (1.0 / p), pc ** (1.0 / p)


def _refined(p, q):
    return (q / p) ** (1.0 / (q - p)), ((q - p) / (q * (p - 1.0))) ** (1.0 / p)


def _global_checks(rep: VerificationReport, P: ProblemParams, grid: RadialGrid, rng):
    N = P.N
    exact_r = sphere_measure(N) / (N + 1)
    err = max(abs(integrate(grid, np.ones(grid.size)) - ball_measure(N)), abs(integrate(grid, grid.nodes) - exact_r))
    rep.add("quadrature_exact", err < 1e-12, err, 1e-12)

    x = rng.normal(size=grid.size).cumsum() * 0.05 + 0.3
    y = cone_project(x, grid.weights)
    ok = in_cone(y) and np.array_equal(cone_project(y, grid.weights), y)
    rep.add("cone_projection", ok, float(np.min(np.diff(y))), 0.0)

    worst = 0.0
    for ell in (P.p + 0.3, P.p + 0.9):
        Q = make_params(P.p, max(P.q, ell + 1.0), N, ell, s0_override=P.s0)
        nl = TruncatedNonlinearity(Q)
        s0, h = Q.s0, 1e-6
        jump = abs(float(nl.f(s0 * (1 - 1e-15))) - float(nl.f(s0 * (1 + 1e-15)))) / float(nl.f(s0))
        dl = (float(nl.f(s0)) - float(nl.f(s0 - h))) / h
        dr = (float(nl.f(s0 + h)) - float(nl.f(s0))) / h
        worst = max(worst, jump, abs(dl - dr) / abs(dl))
    rep.add("truncation_c1", worst < 1e-4, worst, 1e-4)


def _constant_checks(rep, model: EnergyModel, suffix):
    one = np.ones(model.grid.size)
    g = float(np.max(np.abs(model.gradient(one))))
    k = abs(float(model.nehari_residual(one)))
    t = float(np.max(np.abs(tilde_T(model, one) - 1.0)))
    worst = max(g, k, t)
    rep.add("constant_critical", worst < 1e-10, worst, 1e-10, suffix=suffix)
    c = np.array([0.25, 1.0, 3.0])[:, None] * one
    v = solve_T(model, c)
    err = float(np.max(np.abs(v - c ** (1.0 / (model.p - 1.0))) / c ** (1.0 / (model.p - 1.0))))
    rep.add("solve_T_constants", err < 1e-10, err, 1e-10, suffix=suffix)
    u = 0.2 + model.grid.nodes**2
    t1 = model.nehari_scale(u)
    t2 = model.nehari_scale(3.0 * u)
    rel = abs(3.0 * t2 - t1) / t1
    rep.add("nehari_scaling", rel < 1e-10, rel, 1e-10, suffix=suffix)


def verify(
    p: float = 1.97,
    N: int = 1,
    q_list=(40.0, 100.0, 200.0),
    seed: int = 0,
    grid: RadialGrid | None = None,
    ell: float | None = None,
    n_samples: int = 500,
    delta: float = 0.05,
    mp_sweeps: int = 300,
) -> VerificationReport:
    """Run every registered check at each q in ``q_list``."""
    q_list = [float(q) for q in q_list]
    grid = grid or RadialGrid.uniform(N=N)
    q_lo = min(q_list)
    base_ell = ell
    P0 = make_params(p, q_lo, N, base_ell)
    rep = VerificationReport(
        params={"p": p, "N": N, "q_list": q_list, "seed": seed, "M": grid.M, "ell": base_ell,
                "s0": P0.s0, "n_samples": n_samples, "delta": delta},
    )
    rep.hashes = {"grid": _sha(grid.nodes, grid.weights, grid.cell_weights),
                  "config": hashlib.sha256(json.dumps(rep.params, sort_keys=True).encode()).hexdigest()}
    rng = np.random.default_rng(seed)
    _global_checks(rep, P0, grid, rng)

    model0 = EnergyModel(P0, grid)
    G_min = dirichlet_limit_profile(model0)
    Gs = solve_G(P0, grid)
    c_min = float(model0.norm_p(G_min)) / p
    rel = abs(Gs.c_inf - c_min) / c_min
    rep.add("G_crosscheck", rel < 1e-4, rel, 1e-4)

    lim_inf, lim_der = _bounds(p)
    bound_viol = []
    H_worst = 0.0
    asym = []
    for q in q_list:
        sfx = f"@q={q:g}"
        P = make_params(p, q, N, base_ell if base_ell is not None and base_ell < q else None, s0_override=P0.s0)
        model = EnergyModel(P, grid)
        E1 = float(model.energy(np.ones(grid.size)))
        _constant_checks(rep, model, sfx)

        st = descend(model, 0.3 + grid.nodes, stop=1e-6, on_nehari=True)
        mono = bool(np.all(np.diff(st.energies) <= 0.0)) and in_cone(st.u, 1e-12)
        rep.add("descent_monotone", mono, float(np.max(np.diff(st.energies), initial=0.0)), 0.0, suffix=sfx)

        shots = [s for s in find_neumann_roots(P, (0.0, 1.1), 200, grid=grid) if s.monotone]
        below = [s for s in shots if s.e0 < 0.0]
        for s in shots:
            if N == 1:
                H_worst = max(H_worst, float(np.max(np.abs(s.H_trace - s.H_trace[0]))))
            else:
                H_worst = max(H_worst, float(np.max(np.diff(s.H_trace), initial=0.0)))
        # zero roots is the correct answer below the fold; one root means a root was lost
        rep.add("monotone_roots", len(below) in (0, 2), len(below), 2,
                detail=", ".join(f"d-1={s.e0:.6e}" for s in below) or "below the fold", suffix=sfx)
        if len(below) < 2:
            for name in ("ground_state", "ground_state_below_constant", "ground_state_certificate", "oracle_lower",
                         "refined_bounds", "local_min_at_1", "pw_ratio_stable", "box_conditions", "max_monotone",
                         "boundary_frozen", "dq_gap", "miranda_cell", "third_solution", "oracle_upper"):
                rep.skip(name, "no nonconstant monotone roots at this q (below the fold)", sfx)
            continue
        lower, upper = below[0], below[-1]

        rec = minimize_on_nehari(P, 8, grid, G=G_min, seed=seed)
        ok = (rec.accepted() and rec.u0 < 1.0 < rec.u1 and float(np.max(rec.u)) < P.s0)
        rep.add("ground_state", ok, abs(rec.nehari_residual), 1e-6 * max(1.0, abs(rec.energy)), suffix=sfx)
        rep.add("ground_state_below_constant", E1 - rec.energy > 1e-4, E1 - rec.energy, 1e-4, suffix=sfx)
        rep.add("ground_state_certificate", rec.meta["certified"], rec.energy - rec.meta["energy_hG"], 0.0,
                suffix=sfx)
        dist = sup_distance(rec.u, lower.u)
        rep.add("oracle_lower", dist < 5e-3, dist, 5e-3, suffix=sfx)
        asym.append((q, sup_distance(rec.u, G_min), rec.meta["hq_G"]))

        sols = [("u_q", rec.u), ("shoot_lower", lower.u), ("shoot_upper", upper.u)]
        r_inf, r_der = _refined(p, q)
        ref_worst = 0.0
        for name, u in sols:
            du = float(np.max(np.abs(derivative(grid, u))))
            if float(np.max(np.abs(u))) > lim_inf + 1e-9 or du > lim_der + 1e-6:
                bound_viol.append(f"{name}{sfx}")
            ref_worst = max(ref_worst, float(np.max(np.abs(u))) - r_inf, du - r_der)
        rep.add("refined_bounds", ref_worst <= 1e-6, ref_worst, 1e-6, suffix=sfx)

        diag = check_local_min_at_1(P, n_samples, delta, seed=seed)
        rep.add("local_min_at_1", diag.all_above, diag.n_below, 0,
                detail=f"M_q={diag.M_q:.4e}, min gap={diag.min_gap:.4e}, valid={diag.n_valid}", suffix=sfx)
        rep.add("pw_ratio_stable", math.isfinite(diag.pw_ratio) and diag.pw_change < 0.25, diag.pw_change, 0.25,
                suffix=sfx)

        try:
            R1, R2 = choose_box(model, rec)
        except BoxError as exc:
            rep.add("box_conditions", False, detail=str(exc), suffix=sfx)
            for name in ("max_monotone", "boundary_frozen", "dq_gap", "miranda_cell", "third_solution",
                         "oracle_upper"):
                rep.skip(name, "no admissible box", sfx)
            continue
        rep.add("box_conditions", True, R2 / R1, None, detail=f"R1={R1:g}, R2={R2:g}", suffix=sfx)
        surf = PathSurface.initial(model, rec.u, R1, R2)
        d_q, arg = estimate_dq(surf, mp_sweeps)
        hist = [h["max_energy"] for h in surf.history]
        rep.add("max_monotone", bool(np.all(np.diff(hist) <= 0.0)), float(np.max(np.diff(hist), initial=0.0)), 0.0,
                suffix=sfx)
        rep.add("boundary_frozen", surf.boundary_matches_gamma0(), suffix=sfx)
        rep.add("dq_gap", d_q - E1 >= 1e-4, d_q - E1, 1e-4, detail=f"shooting upper root gap {upper.energy_gap:.3e}",
                suffix=sfx)
        found, cell = miranda_check(surf, delta)
        rep.add("miranda_cell", found, detail=f"cell {cell}", suffix=sfx)
        res = refine_vq(model, arg, d_q, distinct_from=(rec.u,))
        gap = res.record.energy - E1 if res.record is not None else float("nan")
        rep.add("third_solution", res.accepted and gap > 1e-4, gap, 1e-4, detail=res.reason, suffix=sfx)
        if res.accepted:
            sols.append(("v_q", res.record.u))
            dist = sup_distance(res.record.u, upper.u)
            rep.add("oracle_upper", dist < 5e-3, dist, 5e-3, suffix=sfx)
        else:
            rep.add("oracle_upper", False, detail="no accepted v_q to compare", suffix=sfx)

    rep.add("H_first_integral", H_worst < 1e-8, H_worst, 1e-8)
    rep.add("a_priori_bounds", not bound_viol, len(bound_viol), 0, detail=", ".join(bound_viol))
    if len(asym) >= 2:
        d = np.array([a[1] for a in asym])
        h = np.array([a[2] for a in asym])
        ok = bool(np.all(np.diff(d) < 0.0) and np.all(np.diff(np.abs(h - 1.0)) <= 1e-9))
        rep.add("asymptotic_trend", ok, float(d[-1]), None,
                detail="sup dist " + ", ".join(f"{x:.4e}" for x in d))
    else:
        rep.skip("asymptotic_trend", "needs at least two q values with a ground state")
    return rep
