"""Ground state on the Nehari set, local minimality of 1 and the large-q study."""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import EnergyModel
from .flow import NewtonError, descend, newton_critical_point, tilde_T
from .params import (
    ProblemParams,
    RadialGrid,
    cone_project,
    grad_norm_p,
    in_cone,
    lp_norm_p,
    sup_distance,
)

SCHEMA = 1
PROVENANCES = ("variational", "shooting", "mountain_pass")


class SolverError(RuntimeError):
    """No start converged; ``traces`` holds one FlowState per start."""

    def __init__(self, msg, traces=()):
        super().__init__(msg)
        self.traces = list(traces)


@dataclass
class SolutionRecord:
    u: np.ndarray
    q: float
    energy: float
    nehari_residual: float
    grad_norm: float
    u0: float
    u1: float
    provenance: str
    params: ProblemParams | None = None
    meta: dict = field(default_factory=dict)

    def accepted(self, tol: float = 1e-6) -> bool:
        return abs(self.nehari_residual) < tol * max(1.0, abs(self.energy)) and in_cone(self.u, 1e-10)

    def to_dict(self) -> dict:
        P = self.params
        return {
            "schema": SCHEMA,
            "params": None if P is None else {k: getattr(P, k) for k in ("p", "q", "N", "ell", "s0")},
            "grid": {"M": int(self.u.size - 1), "type": "uniform"},
            "values": [float(x) for x in self.u],
            "energy": self.energy,
            "nehari_residual": self.nehari_residual,
            "grad_norm": self.grad_norm,
            "u0": self.u0,
            "u1": self.u1,
            "provenance": self.provenance,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=True)

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "SolutionRecord":
        from .params import make_params

        d = json.loads(Path(path).read_text())
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported record schema {d.get('schema')!r}")
        P = d["params"]
        params = None if P is None else make_params(P["p"], P["q"], P["N"], P["ell"], s0_override=P["s0"])
        return cls(
            np.array(d["values"]), params.q if params else float("nan"), d["energy"], d["nehari_residual"],
            d["grad_norm"], d["u0"], d["u1"], d["provenance"], params, d.get("meta", {}),
        )


def make_record(model: EnergyModel, u, provenance: str, **meta) -> SolutionRecord:
    """Measure a field and wrap it; grad_norm is ||u - T~(u)||_{W^{1,p}}."""
    if provenance not in PROVENANCES:
        raise ValueError(f"unknown provenance {provenance!r}")
    u = np.asarray(u, dtype=float)
    try:
        gn = float(model.norm(u - tilde_T(model, u)))
    except NewtonError:
        gn = float("nan")
    return SolutionRecord(
        u=u,
        q=model.params.q,
        energy=float(model.energy(u)),
        nehari_residual=float(model.nehari_residual(u)),
        grad_norm=gn,
        u0=float(u[0]),
        u1=float(u[-1]),
        provenance=provenance,
        params=model.params,
        meta=meta,
    )


def polish(model: EnergyModel, u, tol: float = 1e-11):
    """Newton on I'(u) = 0 with an absolute tolerance scaled to the reaction term."""
    scale = max(1.0, float(np.max(np.abs(model.grid.weights * model.nonlinearity.f(u)))))
    v, _ = newton_critical_point(model, u, tol=tol * scale)
    return v


def seed_fields(grid: RadialGrid, G=None, n_perturbed: int = 0, seed: int = 0):
    """Named multistart seeds: constants, ramps, a smoothed step, G, then perturbations."""
    r = grid.nodes
    base = [
        ("const0.3", np.full(grid.size, 0.3)),
        ("const0.7", np.full(grid.size, 0.7)),
        ("ramp_r", r.copy()),
        ("ramp_r2", r**2),
        ("step0.8", 0.5 + 0.5 * np.tanh((r - 0.8) / 0.05)),
    ]
    if G is not None:
        base.append(("G", np.asarray(G, dtype=float)))
    rng = np.random.default_rng(seed)
    out = list(base)
    for k in range(n_perturbed):
        name, f = base[2 + k % (len(base) - 2)]
        coef = rng.normal(size=6) / np.arange(1, 7) ** 2
        bump = np.cos(np.pi * np.outer(np.arange(1, 7), r)).T @ coef
        out.append((f"{name}+noise{k}", cone_project(f * (1.0 + 0.2 * bump) + 0.05 * abs(coef[0]), grid.weights)))
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NEHARI_THREADS", "1")))
    except ValueError:
        return 1


def _run_start(model, name, u0, stop, max_iter):
    st = descend(model, u0, stop=stop, max_iter=max_iter, on_nehari=True)
    try:
        v = polish(model, st.u)
    except NewtonError as exc:
        return name, st, None, str(exc)
    if not in_cone(v, 1e-9) or np.min(v) <= 0.0:
        return name, st, None, "Newton left the cone"
    return name, st, np.maximum.accumulate(v), ""


def minimize_on_nehari(
    params: ProblemParams,
    multistart: int = 8,
    grid: RadialGrid | None = None,
    G=None,
    extra_seeds=(),
    seed: int = 0,
    stop: float = 1e-6,
    max_iter: int = 400,
) -> SolutionRecord:
    """Lowest-energy critical point on the Nehari set inside the cone.

    Every start is projected to the Nehari set, run through the projected
    descent flow to ``stop`` and then polished by Newton.  The first
    ``multistart`` seeds of :func:`seed_fields` are used, plus
    ``extra_seeds``; G is computed when not supplied.  The record's meta
    carries every start's energy and the certificate c_q <= I(h_q(G) G).
    """
    from .flow import dirichlet_limit_profile

    grid = grid or RadialGrid.uniform(N=params.N)
    model = EnergyModel(params, grid)
    if G is None:
        G = dirichlet_limit_profile(model)
    seeds = seed_fields(grid, G, max(0, multistart - 6), seed)[:multistart]
    seeds += [(f"extra{k}", np.asarray(s, float)) for k, s in enumerate(extra_seeds)]
    job = lambda item: _run_start(model, item[0], item[1], stop, max_iter)
    with ThreadPoolExecutor(_threads()) as pool:
        results = list(pool.map(job, seeds))
    good = [(name, v) for name, _, v, _ in results if v is not None]
    if not good:
        raise SolverError("no multistart converged", [st for _, st, _, _ in results])
    energies = {name: float(model.energy(v)) for name, v in good}
    best_name = min(energies, key=lambda k: (energies[k], k))
    best = dict(good)[best_name]
    meta = {"start": best_name, "start_energies": energies,
            "failed": {name: why for name, _, v, why in results if v is None}}
    t, tg = model.nehari_project(np.asarray(G, float))
    bound = float(model.energy(tg))
    meta["hq_G"] = t
    meta["energy_hG"] = bound
    meta["certified"] = bool(energies[best_name] <= bound + 1e-12 * max(1.0, abs(bound)))
    rec = make_record(model, best, "variational", **meta)
    assert all(rec.energy <= e + 1e-12 * max(1.0, abs(e)) for e in energies.values())
    return rec


# -- local minimality of the constant ------------------------------------------

@dataclass
class LocalMinDiagnostic:
    q: float
    delta: float
    n_samples: int
    n_valid: int
    n_below: int
    M_q: float
    pw_ratio: float
    pw_ratio_doubled: float
    min_gap: float
    distances: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)

    @property
    def all_above(self) -> bool:
        return self.n_below == 0

    @property
    def pw_change(self) -> float:
        return abs(self.pw_ratio_doubled - self.pw_ratio) / self.pw_ratio

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("q", "delta", "n_samples", "n_valid", "n_below", "M_q",
                                           "pw_ratio", "pw_ratio_doubled", "min_gap")}
        d["pw_change"] = self.pw_change
        return d


def _noise(rng, grid: RadialGrid, n: int, modes: int = 8):
    """Smooth random fields: cosine series with decaying coefficients."""
    k = np.arange(1, modes + 1)
    coef = rng.normal(size=(n, modes)) / k**1.5
    return coef @ np.cos(np.pi * np.outer(k, grid.nodes))


def _sample_batch(model, rng, n, delta):
    g, p = model.grid, model.p
    noise = _noise(rng, g, n)
    noise /= np.asarray(model.norm(noise))[:, None]
    amp = delta * rng.uniform(0.05, 1.0, size=n)
    w = cone_project(1.0 + amp[:, None] * noise, g.weights)
    moved = np.max(np.abs(w - 1.0), axis=1) > 1e-12
    w = w[moved]
    t = np.atleast_1d(model.nehari_scale(w))
    w = t[:, None] * w
    dist_p = np.asarray(model.norm_p(w - 1.0))
    keep = (dist_p ** (1.0 / p) <= delta) & (dist_p > 0.0)
    w, dist_p = w[keep], dist_p[keep]
    gaps = np.asarray(model.energy(w)) - float(model.energy(np.ones(g.size)))
    pw = lp_norm_p(g, w - 1.0, p) / grad_norm_p(g, w, p)
    return dist_p, gaps, pw


def check_local_min_at_1(
    params: ProblemParams,
    n_samples: int = 500,
    delta: float = 0.05,
    grid: RadialGrid | None = None,
    seed: int = 0,
    max_batches: int = 20,
) -> LocalMinDiagnostic:
    """Sample Nehari elements near 1 and measure I(w) - I(1) against ||w - 1||^p.

    Draws batches until ``n_samples`` valid samples (after Nehari projection,
    ||w - 1||_{W^{1,p}} <= delta) exist, then draws a second, independent
    set of the same size for the Poincare-Wirtinger stability check.
    M_q is the smallest observed ratio; it is negative when some sample lies
    below the constant's energy.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    grid = grid or RadialGrid.uniform(M=512, N=params.N)
    model = EnergyModel(params, grid)
    rng = np.random.default_rng(seed)

    def collect(n):
        d_all, g_all, pw_all = [], [], []
        for _ in range(max_batches):
            d, gp, pw = _sample_batch(model, rng, n, delta)
            d_all.append(d)
            g_all.append(gp)
            pw_all.append(pw)
            if sum(map(len, d_all)) >= n:
                break
        d, gp, pw = (np.concatenate(x)[:n] for x in (d_all, g_all, pw_all))
        return d, gp, pw

    dist_p, gaps, pw = collect(n_samples)
    if dist_p.size < 10:
        raise ValueError(f"only {dist_p.size} valid samples; delta too small for the sampler")
    _, _, pw2 = collect(n_samples)
    ratios = gaps / dist_p
    return LocalMinDiagnostic(
        q=params.q,
        delta=delta,
        n_samples=n_samples,
        n_valid=int(dist_p.size),
        n_below=int(np.sum(gaps < 0.0)),
        M_q=float(np.min(ratios)),
        pw_ratio=float(np.max(pw)),
        pw_ratio_doubled=float(np.max(np.concatenate([pw, pw2]))),
        min_gap=float(np.min(gaps)),
        distances=dist_p ** (1.0 / params.p),
        gaps=gaps,
    )


# -- large-q behaviour ------------------------------------------------------------

@dataclass
class AsymptoticTable:
    p: float
    N: int
    c_inf: float
    G_norm: float
    rows: list = field(default_factory=list)

    COLUMNS = ("q", "c_q", "sup_dist_G", "norm_uq", "hq_G", "c_gap")

    def column(self, name):
        return np.array([row[name] for row in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows:
            w.writerow([repr(float(row[c])) for c in self.COLUMNS])
        return buf.getvalue()


def asymptotic_study(params: ProblemParams, q_list, grid: RadialGrid | None = None, multistart: int = 6):
    """c_q, ||u_q - G||_inf, ||u_q||_{W^{1,p}} and h_q(G) along increasing q."""
    from .flow import dirichlet_limit_profile

    q_list = [float(q) for q in q_list]
    if any(b <= a for a, b in zip(q_list, q_list[1:])):
        raise ValueError("q_list must be increasing")
    grid = grid or RadialGrid.uniform(N=params.N)
    model = EnergyModel(params, grid)
    G = dirichlet_limit_profile(model)
    G_norm = float(model.norm(G))
    table = AsymptoticTable(params.p, params.N, G_norm**params.p / params.p, G_norm)
    prev = ()
    for q in q_list:
        P = params.with_q(q, ell=min(params.ell, 0.5 * (params.p + q)))
        rec = minimize_on_nehari(P, multistart, grid, G=G, extra_seeds=prev)
        m = EnergyModel(P, grid)
        table.rows.append({
            "q": q,
            "c_q": rec.energy,
            "sup_dist_G": sup_distance(rec.u, G),
            "norm_uq": float(m.norm(rec.u)),
            "hq_G": rec.meta["hq_G"],
            "c_gap": abs(rec.energy - table.c_inf),
            "record": rec,
        })
        prev = (rec.u,)
    return table
