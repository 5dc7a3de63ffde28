"""Two-dimensional min-max level over the box Q and the saddle-type solution.

Surfaces are anchored at gamma0(t, s) = t (s u_q + 1 - s) on the boundary of
Q = [R1, R2] x [0, 1].  Along a column s = const the energy t -> I(t w) of a
cone element peaks exactly where t w crosses the Nehari set, so a surface is
carried by one Nehari point per column (a "string" from 1 to u_q) and the
column is the ray through it:

    fields[i, j] = (t_i / h_j0) w_j,   h_j0 = h_q(s_j u_q + 1 - s_j),

which reproduces gamma0 exactly before any deformation; the first and last
rows stay frozen at gamma0.  The max of I over the surface is then the max of
I along the Nehari-projected string, evaluated on sub-sampled segments so
that it estimates the continuous maximum rather than the maximum over nodes.

Deformation moves every interior string node by one backtracked step of the
fixed-point flow (read old string, write new string), re-projects to the
Nehari set and redistributes the nodes to equal W^{1,p} arc length.  A sweep
is kept only when the maximum does not increase, so the recorded sequence is
nonincreasing by construction.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import EnergyModel, NehariProjectionError
from .flow import NewtonError, tilde_T
from .nehari import SolutionRecord, make_record, polish
from .params import ProblemParams, RadialGrid, cone_project, in_cone, sup_distance

SCHEMA = 1


class BoxError(RuntimeError):
    pass


def gamma0(t, s, u_q):
    return t * (s * np.asarray(u_q) + 1.0 - s)


def choose_box(model: EnergyModel, u_q: SolutionRecord, n_s: int = 33, max_halvings: int = 60):
    """Scan for R1 << 1 << R2 satisfying the four box conditions on an s-grid.

    R1 is the first of 1/2, 1/4, ... with 0 < I(gamma0) <= c_q/2 and
    I'(gamma0)[gamma0] > 0 for every s; R2 the first of 2, 4, ... with both
    negative.
    """
    s = np.linspace(0.0, 1.0, n_s)
    base = s[:, None] * u_q.u[None, :] + (1.0 - s)[:, None]
    half = 0.5 * u_q.energy

    def ok_low(t):
        g = t * base
        E, K = model.energy(g), model.nehari_residual(g)
        return bool(np.all(E > 0.0) and np.all(E <= half) and np.all(K > 0.0))

    def ok_high(t):
        g = t * base
        with np.errstate(all="ignore"):
            E, K = model.energy(g), model.nehari_residual(g)
        return bool(np.all(E < 0.0) and np.all(K < 0.0))

    R1 = 0.5
    for _ in range(max_halvings):
        if ok_low(R1):
            break
        R1 *= 0.5
    else:
        raise BoxError("no R1 found: 0 < I <= c_q/2 with positive Nehari functional fails on the s-grid")
    R2 = 2.0
    for _ in range(max_halvings):
        if ok_high(R2):
            break
        R2 *= 2.0
    else:
        raise BoxError("no R2 found: negative energy and Nehari functional fail on the s-grid")
    return R1, R2


@dataclass
class PathSurface:
    model: EnergyModel
    u_q: np.ndarray
    t_nodes: np.ndarray
    s_nodes: np.ndarray
    string: np.ndarray
    h0: np.ndarray
    boundary_frozen: bool = True
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, model: EnergyModel, u_q, R1: float, R2: float, n_t: int = 17, n_s: int = 17):
        u_q = np.asarray(u_q, dtype=float)
        lo = np.geomspace(R1, 1.0, (n_t + 1) // 2)
        hi = np.geomspace(1.0, R2, n_t - lo.size + 1)[1:]
        t = np.concatenate([lo, hi])
        s = np.linspace(0.0, 1.0, n_s)
        base = s[:, None] * u_q[None, :] + (1.0 - s)[:, None]
        h0 = np.asarray(model.nehari_scale(base))
        string = h0[:, None] * base
        string[0] = 1.0
        string[-1] = u_q
        return cls(model, u_q, t, s, string, h0)

    @property
    def fields(self) -> np.ndarray:
        """(n_t, n_s, n_nodes) array of surface entries; boundary rows and columns are gamma0."""
        F = (self.t_nodes[:, None, None] / self.h0[None, :, None]) * self.string[None, :, :]
        F[:, 0] = gamma0(self.t_nodes[:, None], 0.0, self.u_q)
        F[:, -1] = gamma0(self.t_nodes[:, None], 1.0, self.u_q)
        F[0] = gamma0(self.t_nodes[0], self.s_nodes[:, None], self.u_q)
        F[-1] = gamma0(self.t_nodes[-1], self.s_nodes[:, None], self.u_q)
        return F

    def boundary_matches_gamma0(self) -> bool:
        F = self.fields
        t, s = self.t_nodes, self.s_nodes
        ref_rows = [gamma0(t[k], s[:, None], self.u_q) for k in (0, -1)]
        ref_cols = [gamma0(t[:, None], s[k], self.u_q) for k in (0, -1)]
        return (
            all(np.array_equal(F[k], r) for k, r in zip((0, -1), ref_rows))
            and all(np.array_equal(F[:, k], c) for k, c in zip((0, -1), ref_cols))
        )

    def to_json(self, full: bool = False) -> str:
        data = {
            "schema": SCHEMA,
            "t_nodes": self.t_nodes.tolist(),
            "s_nodes": self.s_nodes.tolist(),
            "h0": self.h0.tolist(),
            "string": self.string.tolist(),
            "boundary_frozen": self.boundary_frozen,
            "string_energy": [float(e) for e in self.model.energy(self.string)],
        }
        if full:
            data["fields"] = self.fields.tolist()
        return json.dumps(data)

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sweep", "max_energy", "step", "accepted"])
        for row in self.history:
            w.writerow([row["sweep"], repr(row["max_energy"]), repr(row["step"]), int(row["accepted"])])
        return buf.getvalue()


def _subsample(string: np.ndarray, k: int):
    """Points on each segment of the polygonal string, endpoints included once."""
    a = np.linspace(0.0, 1.0, k + 1)[:-1]
    seg = (1.0 - a)[None, :, None] * string[:-1, None, :] + a[None, :, None] * string[1:, None, :]
    return np.concatenate([seg.reshape(-1, string.shape[1]), string[-1:]], axis=0)


def path_max(model: EnergyModel, string: np.ndarray, k: int = 4):
    """(max energy, maximizing field) over the Nehari projection of the polygonal string."""
    pts = _subsample(string, k)
    t = np.atleast_1d(model.nehari_scale(pts))
    proj = t[:, None] * pts
    E = np.asarray(model.energy(proj))
    i = int(np.argmax(E))
    return float(E[i]), proj[i]


def _arc_reparam(model: EnergyModel, string: np.ndarray):
    """Equal W^{1,p} arc-length redistribution, re-projected onto the Nehari set."""
    seg = np.asarray(model.norm(np.diff(string, axis=0)))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] <= 0.0:
        return string
    target = np.linspace(0.0, arc[-1], string.shape[0])
    idx = np.clip(np.searchsorted(arc, target, side="right") - 1, 0, string.shape[0] - 2)
    lam = (target - arc[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    new = (1.0 - lam)[:, None] * string[idx] + lam[:, None] * string[idx + 1]
    inner = new[1:-1]
    t = np.atleast_1d(model.nehari_scale(inner))
    new[1:-1] = t[:, None] * inner
    new[0], new[-1] = string[0], string[-1]
    return new


def _deform(model: EnergyModel, string: np.ndarray, tau: float):
    inner = string[1:-1]
    d = tilde_T(model, inner) - inner
    cand = cone_project(inner + tau * d, model.grid.weights)
    t = np.atleast_1d(model.nehari_scale(cand))
    new = string.copy()
    new[1:-1] = t[:, None] * cand
    return new


def estimate_dq(
    surface: PathSurface,
    max_sweeps: int = 300,
    stall_sweeps: int = 20,
    stall_rtol: float = 1e-8,
    step: float = 0.5,
    min_step: float = 1e-8,
    k_sub: int = 4,
):
    """Deform the surface inside the admissible class and track max_Q I.

    Returns (d_q, argmax_field).  ``surface.history`` records one row per
    sweep; accepted rows form a nonincreasing sequence.  Stops after
    ``max_sweeps``, after ``stall_sweeps`` consecutive accepted sweeps whose
    relative change is below ``stall_rtol``, or when the step underflows.
    """
    model = surface.model
    best, arg = path_max(model, surface.string, k_sub)
    surface.history.append({"sweep": 0, "max_energy": best, "step": 0.0, "accepted": True})
    tau = step
    stall = 0
    for sweep in range(1, max_sweeps + 1):
        try:
            cand = _arc_reparam(model, _deform(model, surface.string, tau))
            m, a = path_max(model, cand, k_sub)
        except (NewtonError, NehariProjectionError):
            m, a = np.inf, None
        accepted = m <= best
        surface.history.append({"sweep": sweep, "max_energy": min(m, best), "step": tau, "accepted": accepted})
        if not accepted:
            tau *= 0.5
            if tau < min_step:
                break
            continue
        rel = (best - m) / max(1.0, abs(best))
        stall = stall + 1 if rel < stall_rtol else 0
        surface.string, best, arg = cand, m, a
        tau = min(step, 1.5 * tau)
        if stall >= stall_sweeps:
            break
    return best, arg


def miranda_check(surface: PathSurface, delta: float):
    """Look for a grid cell where both K = I'(g)[g] and D = ||g - 1|| - delta change sign.

    Returns (found, (i, j)) for the first such cell in (t, s) order.
    """
    model = surface.model
    F = surface.fields
    n_t, n_s, n = F.shape
    flat = F.reshape(-1, n)
    with np.errstate(all="ignore"):
        K = np.asarray(model.nehari_residual(flat)).reshape(n_t, n_s)
    D = np.asarray(model.norm(flat - 1.0)).reshape(n_t, n_s) - delta
    for i in range(n_t - 1):
        for j in range(n_s - 1):
            k = K[i : i + 2, j : j + 2]
            d = D[i : i + 2, j : j + 2]
            if k.min() <= 0.0 <= k.max() and d.min() <= 0.0 <= d.max():
                return True, (i, j)
    return False, None


@dataclass
class SaddleResult:
    d_q: float
    argmax: np.ndarray
    record: SolutionRecord | None
    accepted: bool
    reason: str


def refine_vq(model: EnergyModel, argmax_field, d_q: float | None = None, distinct_from=()) -> SaddleResult:
    """Newton on I' = 0 from the argmax; accept a nonconstant cone solution above I(1).

    ``distinct_from`` lists fields (u_q, ...) the result must differ from by
    more than 1e-3 in sup norm.
    """
    E1 = float(model.energy(np.ones(model.grid.size)))
    d_q = float(model.energy(argmax_field)) if d_q is None else d_q
    try:
        v = polish(model, argmax_field)
    except NewtonError as exc:
        return SaddleResult(d_q, argmax_field, None, False, f"Newton diverged: {exc}")
    rec = make_record(model, v, "mountain_pass", d_q=d_q)
    checks = [
        (in_cone(v, 1e-9), "left the cone"),
        (sup_distance(v, 1.0) > 1e-3, "converged to the constant solution"),
        (rec.energy > E1, "energy not above I(1)"),
    ]
    checks += [(sup_distance(v, w) > 1e-3, "coincides with a known solution") for w in distinct_from]
    for ok, why in checks:
        if not ok:
            return SaddleResult(d_q, argmax_field, rec, False, why)
    return SaddleResult(d_q, argmax_field, rec, True, "accepted")


def mountain_pass(
    params: ProblemParams,
    u_q: SolutionRecord,
    grid: RadialGrid | None = None,
    n_t: int = 17,
    n_s: int = 17,
    max_sweeps: int = 300,
):
    """Box, surface, d_q estimate and Newton refinement in one call."""
    grid = grid or RadialGrid.uniform(M=u_q.u.size - 1, N=params.N)
    model = EnergyModel(params, grid)
    R1, R2 = choose_box(model, u_q)
    surf = PathSurface.initial(model, u_q.u, R1, R2, n_t, n_s)
    d_q, arg = estimate_dq(surf, max_sweeps)
    res = refine_vq(model, arg, d_q, distinct_from=(u_q.u,))
    return surf, res, (R1, R2)
