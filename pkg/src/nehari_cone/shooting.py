"""Shooting oracle for radial solutions, branch tracing and the limit profile.

The radial equation is written in flux form

    u' = psi^{-1}(z / r^{N-1}),   z' = r^{N-1} (u^{p-1} - f(u)),

with psi(s) = |s|^{p-2} s and z = r^{N-1} psi(u').  The unknown is carried
as the offset e = u - 1 and the nonlinearity is evaluated through
log1p/expm1, so shots that start within 1e-40 of the constant solution keep
full relative precision.  This matters for 1 < p < 2: the half-period of
small oscillations about u = 1 grows only like amplitude^{1 - 2/p}, and for
p near 2 the second nonconstant monotone solution sits extremely close to 1.

An extra quadrature state accumulates I(u) - I(1) along the shot, again
without cancellation.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .nonlinearity import TruncatedNonlinearity
from .params import ProblemParams, RadialGrid, sphere_measure

RTOL = 1e-12
BLOWUP = 1e6
SERIES_CELLS = 10


def _em(a, L):
    """(exp(aL) - 1 - aL)/a for scalars, series for small aL."""
    x = a * L
    if abs(x) < 1e-3:
        return L * x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    return (math.expm1(x) - x) / a


@dataclass
class ShotResult:
    d: float
    e0: float
    u: np.ndarray
    offset: np.ndarray
    up_end: float
    monotone: bool
    H_trace: np.ndarray
    energy_gap: float
    overflow: bool = False
    r_end: float = 1.0

    @property
    def u_end(self) -> float:
        return 1.0 + float(self.offset[-1])


class _RadialODE:
    def __init__(self, params: ProblemParams, use_truncation: bool):
        self.P = params
        self.trunc = use_truncation
        self.nl = TruncatedNonlinearity(params)
        self.omega = sphere_measure(params.N)
        self.inv = 1.0 / (params.p - 1.0)

    def g_and_pot(self, e):
        """(u^{p-1} - f(u), potential(u)) at u = 1 + e."""
        P = self.P
        u = 1.0 + e
        if u <= 0.0:
            return 0.0, 1.0 / P.p - 1.0 / P.q
        if self.trunc and u > P.s0:
            g = u ** (P.p - 1.0) - float(self.nl.f(u))
            return g, float(self.nl.potential(u))
        L = math.log1p(e)
        try:
            g = math.expm1((P.p - 1.0) * L) - math.expm1((P.q - 1.0) * L)
            pot = _em(P.q, L) - _em(P.p, L)
        except OverflowError:
            return -math.inf, math.inf
        return g, pot

    def rhs(self, r, y):
        e, z, _ = y
        N, p = self.P.N, self.P.p
        rn = r ** (N - 1) if N > 1 else 1.0
        zz = z / rn
        up = math.copysign(abs(zz) ** self.inv, zz)
        g, pot = self.g_and_pot(e)
        return [up, rn * g, self.omega * rn * (abs(up) ** p / p - pot)]

    def series_start(self, e0, r0):
        """State at r0 from the leading-order expansion u' ~ psi^{-1}(r g(d)/N)."""
        P = self.P
        g, pot = self.g_and_pot(e0)
        pc = P.p / (P.p - 1.0)
        de = math.copysign(abs(g / P.N) ** self.inv, g) * r0**pc / pc
        z = r0**P.N * g / P.N
        gap = -self.omega * pot * r0**P.N / P.N
        return [e0 + de, z, gap]


def _blowup(r, y):
    return BLOWUP - abs(y[0])


_blowup.terminal = True


def shoot(
    d: float | None,
    params: ProblemParams,
    use_truncation: bool = False,
    grid: RadialGrid | None = None,
    e0: float | None = None,
    rtol: float = RTOL,
) -> ShotResult:
    """Integrate the radial IVP from u(0) = d, u'(0) = 0 up to r = 1.

    Either ``d`` or the offset ``e0 = d - 1`` may be given; ``e0`` is the
    precise one.  N = 1 starts at r = 0; N >= 2 starts at r0 = 10 h from the
    leading-order series, h the grid spacing.
    """
    if e0 is None:
        if d is None or not d > 0:
            raise ValueError("shoot needs d > 0")
        e0 = float(d) - 1.0
    if not e0 > -1.0:
        raise ValueError("shoot needs d > 0")
    grid = grid or RadialGrid.uniform(N=params.N)
    ode = _RadialODE(params, use_truncation)
    scale = min(1.0, abs(e0)) if e0 != 0.0 else 1.0
    if e0 == 0.0:
        n = grid.size
        return ShotResult(1.0, 0.0, np.ones(n), np.zeros(n), 0.0, True, np.zeros(n), 0.0)
    r0 = 0.0 if params.N == 1 else SERIES_CELLS * grid.h
    y0 = [e0, 0.0, 0.0] if r0 == 0.0 else ode.series_start(e0, r0)
    atol = [1e-15 * scale, 1e-15 * scale, max(1e-16 * scale * scale, 1e-300)]
    with np.errstate(all="ignore"):
        sol = solve_ivp(
            ode.rhs, (r0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol,
            dense_output=True, events=_blowup,
        )
    r_end = float(sol.t[-1])
    overflow = bool(sol.status == 1 or not np.all(np.isfinite(sol.y[:, -1])))
    nodes = grid.nodes
    inside = nodes <= r_end
    Y = np.full((3, nodes.size), np.nan)
    if r0 > 0.0:
        early = nodes < r0
        Y[:, early & inside] = np.array([_series_profile(ode, e0, r) for r in nodes[early & inside]]).T
        later = ~early & inside
    else:
        later = inside
    if np.any(later):
        Y[:, later] = sol.sol(nodes[later])
    offset = Y[0]
    rn = nodes ** (params.N - 1) if params.N > 1 else np.ones_like(nodes)
    with np.errstate(all="ignore"):
        zz = np.where(rn > 0, Y[1] / np.where(rn > 0, rn, 1.0), 0.0)
        up = np.sign(zz) * np.abs(zz) ** ode.inv
        pot = np.array([ode.g_and_pot(e)[1] if np.isfinite(e) else np.nan for e in offset])
        H = np.abs(up) ** params.p / params.p_conj + pot
    zmax = np.nanmax(np.abs(Y[1])) if np.any(np.isfinite(Y[1])) else 0.0
    monotone = (not overflow) and bool(np.nanmin(Y[1]) >= -1e-9 * zmax) and np.all(np.isfinite(offset))
    z_end = float(sol.y[1, -1])
    up_end = math.copysign(abs(z_end) ** ode.inv, z_end) if not overflow else math.nan
    return ShotResult(
        d=1.0 + e0,
        e0=e0,
        u=1.0 + offset,
        offset=offset,
        up_end=up_end,
        monotone=monotone,
        H_trace=H,
        energy_gap=float(sol.y[2, -1]) if not overflow else math.nan,
        overflow=overflow,
        r_end=r_end,
    )


def _series_profile(ode: _RadialODE, e0, r):
    if r == 0.0:
        return [e0, 0.0, 0.0]
    return ode.series_start(e0, r)


def neumann_defect(params: ProblemParams, e0: float, use_truncation: bool = False, rtol: float = RTOL) -> float:
    """z(1) = psi(u'(1)) as a function of the starting offset; +inf on overflow."""
    if e0 == 0.0:
        return 0.0
    ode = _RadialODE(params, use_truncation)
    scale = min(1.0, abs(e0))
    r0 = 0.0 if params.N == 1 else SERIES_CELLS / 2048.0
    y0 = [e0, 0.0, 0.0] if r0 == 0.0 else ode.series_start(e0, r0)
    with np.errstate(all="ignore"):
        sol = solve_ivp(
            ode.rhs, (r0, 1.0), y0, method="DOP853", rtol=rtol,
            atol=[1e-15 * scale, 1e-15 * scale, 1.0], events=_blowup,
        )
    if sol.status == 1 or not np.isfinite(sol.y[1, -1]):
        return math.inf
    return float(sol.y[1, -1])


def _scan_offsets(d_range, n_scan, n_log=150, log_decades=300):
    lo, hi = d_range
    lin = np.linspace(lo, hi, n_scan) - 1.0
    lin = lin[(lin > -1.0) & (np.abs(lin) > 0.05)]
    logs = []
    if lo < 1.0:
        logs.append(-np.logspace(math.log10(min(0.05, 1.0 - lo)), -log_decades, n_log))
    if hi > 1.0:
        logs.append(np.logspace(math.log10(min(0.05, hi - 1.0)), -log_decades, n_log))
    pts = np.concatenate([lin, *logs]) if logs else lin
    return np.unique(pts)


def _refine(fn, a, b, fa, fb):
    """Root of fn between offsets a < b of the same sign, bisecting in log|e| near 1."""
    if a * b > 0 and max(abs(a), abs(b)) <= 0.05:
        sgn = math.copysign(1.0, a)
        la, lb = math.log(abs(a)), math.log(abs(b))
        k = brentq(lambda L: fn(sgn * math.exp(L)), la, lb, xtol=1e-15, rtol=1e-15, maxiter=200)
        return sgn * math.exp(k)
    return brentq(fn, a, b, xtol=1e-16, rtol=1e-15, maxiter=200)


def _distinct(e, roots):
    return all(abs(e - x) > 1e-8 * max(abs(e), abs(x)) for x in roots)


def find_neumann_roots(
    params: ProblemParams,
    d_range=(0.0, 1.1),
    n_scan: int = 200,
    use_truncation: bool = False,
    grid: RadialGrid | None = None,
    monotone_only: bool = False,
) -> list[ShotResult]:
    """All starting values d in ``d_range`` with u'(1; d) = 0.

    The scan mixes a uniform grid in d with logarithmically spaced offsets
    from 1 (down to 1e-300), so roots exponentially close to the constant
    solution are bracketed too.  Roots are distinct when their offsets from
    1 differ by more than 1e-8 relative.  The constant d = 1 is included when
    it lies in the range.  An empty list is a valid answer.
    """
    grid = grid or RadialGrid.uniform(N=params.N)
    fn = lambda e: neumann_defect(params, e, use_truncation)
    pts = _scan_offsets(d_range, n_scan)
    vals = np.array([fn(e) for e in pts])
    roots: list[float] = []
    for a, b, fa, fb in zip(pts[:-1], pts[1:], vals[:-1], vals[1:]):
        if not (np.isfinite(fa) and np.isfinite(fb)) or a * b <= 0.0:
            continue
        if fa == 0.0:
            cand = a
        elif np.sign(fa) != np.sign(fb) and fb != 0.0:
            cand = _refine(fn, a, b, fa, fb)
        else:
            continue
        if _distinct(cand, roots):
            roots.append(cand)
    if d_range[0] <= 1.0 <= d_range[1] and _distinct(0.0, roots):
        roots.append(0.0)
    shots = [shoot(None, params, use_truncation, grid, e0=e) for e in sorted(roots)]
    if monotone_only:
        shots = [s for s in shots if s.monotone]
    return shots


# -- branch tracing ------------------------------------------------------------

@dataclass
class BranchPoint:
    q: float
    d: float
    e0: float
    u_end: float
    energy: float
    energy_gap: float
    label: str


@dataclass
class Branch:
    p: float
    N: int
    points: list = field(default_factory=list)
    fold_q: float | None = None
    missing: list = field(default_factory=list)

    def by_label(self, label: str) -> list[BranchPoint]:
        return [pt for pt in self.points if pt.label == label]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "d", "u_end", "energy", "label"])
        for pt in self.points:
            w.writerow([repr(pt.q), repr(pt.d), repr(pt.u_end), repr(pt.energy), pt.label])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": 1,
                "p": self.p,
                "N": self.N,
                "fold_q": self.fold_q,
                "missing": self.missing,
                "points": [pt.__dict__ for pt in self.points],
            },
            indent=1,
        )

    def write(self, path: str | Path):
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            path.write_text(self.to_csv())


def constant_energy(params: ProblemParams) -> float:
    return params.ball_measure * (1.0 / params.p - 1.0 / params.q)


def _point(params, shot: ShotResult, label: str) -> BranchPoint:
    E1 = constant_energy(params)
    return BranchPoint(params.q, shot.d, shot.e0, shot.u_end, E1 + shot.energy_gap, shot.energy_gap, label)


def _track(fn, e_prev):
    """Re-bracket a root near the previous offset; None if it is gone."""
    near = abs(e_prev) <= 0.05
    for width in (0.02, 0.08, 0.3):
        if near:
            L = math.log(abs(e_prev))
            span = width * 40.0
            a = -math.exp(L + span)
            b = -math.exp(L - span)
            a = max(a, -0.999)
        else:
            a, b = e_prev - width, min(e_prev + width, -1e-12)
            a = max(a, -0.999)
        fa, fb = fn(a), fn(b)
        if np.isfinite(fa) and np.isfinite(fb) and np.sign(fa) != np.sign(fb):
            return _refine(fn, a, b, fa, fb)
    return None


def trace_branch(
    params: ProblemParams,
    q_range=(3.0, 100.0),
    q_steps: int = 200,
    n_scan: int = 120,
    grid: RadialGrid | None = None,
) -> Branch:
    """Sweep q and follow the monotone nonconstant solutions with d < 1.

    Until roots appear every q gets a full scan; afterwards each branch is
    re-bracketed around its previous offset.  The smallest q with
    nonconstant roots is recorded as the fold.  ``params.q`` is ignored.
    """
    grid = grid or RadialGrid.uniform(N=params.N)
    br = Branch(params.p, params.N)
    prev: dict[str, float] = {}
    for q in np.linspace(q_range[0], q_range[1], q_steps):
        q = float(q)
        P = params.with_q(q, ell=min(params.ell, 0.5 * (params.p + q)))
        fn = lambda e: neumann_defect(P, e)
        found: dict[str, ShotResult] = {}
        if prev:
            for label, e in prev.items():
                e_new = _track(fn, e)
                if e_new is not None:
                    s = shoot(None, P, grid=grid, e0=e_new)
                    if s.monotone and e_new < 0:
                        found[label] = s
        if len(found) < 2:
            shots = [s for s in find_neumann_roots(P, (0.0, 1.0), n_scan, grid=grid) if s.monotone and s.e0 < 0]
            if len(shots) >= 2:
                found = {"lower": shots[0], "upper": shots[-1]}
            elif len(shots) == 1:
                s = shots[0]
                label = "lower" if not prev else min(prev, key=lambda k: abs(math.log(abs(prev[k])) - math.log(abs(s.e0))))
                found = {label: s}
        if found and br.fold_q is None:
            br.fold_q = q
        for label in ("lower", "upper"):
            if label in found:
                br.points.append(_point(P, found[label], label))
            elif br.fold_q is not None:
                br.missing.append({"q": q, "label": label})
        br.points.append(BranchPoint(q, 1.0, 0.0, 1.0, constant_energy(P), 0.0, "constant"))
        prev = {k: s.e0 for k, s in found.items()} or prev
    return br


def plot_branch_svg(branch: Branch, path: str | Path, g0: float | None = None):
    """u(0) against q: constant line at 1 and one colour per branch label."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "nehari-cone"
    fig, ax = plt.subplots(figsize=(6, 4))
    colours = {"lower": "tab:blue", "upper": "tab:cyan", "constant": "tab:gray"}
    for label, c in colours.items():
        pts = branch.by_label(label)
        if pts:
            ax.plot([pt.q for pt in pts], [pt.d for pt in pts], ".-" if label != "constant" else "-",
                    color=c, ms=2, lw=1, label=label)
    if g0 is not None:
        ax.axhline(g0, color="k", ls=":", lw=0.8, label="G(0)")
    ax.set_xlabel("q")
    ax.set_ylabel("u(0)")
    ax.set_title(f"radially nondecreasing solutions, p={branch.p:g}, N={branch.N}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- limit profile ----------------------------------------------------------------

@dataclass
class LimitProfile:
    """G on the grid, its value at 0 and ||G||^p_{W^{1,p}} from the shot."""

    d: float
    u: np.ndarray
    norm_p: float
    p: float

    @property
    def c_inf(self) -> float:
        return self.norm_p / self.p


def _g_shot(params: ProblemParams, d: float, r_eval=None):
    P = params
    omega = sphere_measure(P.N)
    inv = 1.0 / (P.p - 1.0)

    def rhs(r, y):
        G, z, _ = y
        rn = r ** (P.N - 1) if P.N > 1 else 1.0
        zz = z / rn
        up = math.copysign(abs(zz) ** inv, zz)
        return [up, rn * abs(G) ** (P.p - 1.0) * math.copysign(1.0, G), omega * rn * (abs(up) ** P.p + abs(G) ** P.p)]

    if P.N == 1:
        r0, y0 = 0.0, [d, 0.0, 0.0]
    else:
        r0 = 1e-4
        g = d ** (P.p - 1.0)
        pc = P.p / (P.p - 1.0)
        y0 = [d + (g / P.N) ** inv * r0**pc / pc, r0**P.N * g / P.N, omega * d**P.p * r0**P.N / P.N]
    sol = solve_ivp(rhs, (r0, 1.0), y0, method="DOP853", rtol=1e-12, atol=1e-14, dense_output=r_eval is not None)
    return sol


def solve_G(params: ProblemParams, grid: RadialGrid | None = None) -> LimitProfile:
    """Limit profile: -Delta_p G + G^{p-1} = 0 in B, G = 1 on the boundary.

    G(1; d) is increasing in d with G(1; 0) = 0 and G(1; 1) > 1, so the
    starting value is bracketed in (0, 1] and found by bisection.
    """
    grid = grid or RadialGrid.uniform(N=params.N)
    fn = lambda d: _g_shot(params, d).y[0, -1] - 1.0
    d = brentq(fn, 1e-6, 1.0, xtol=1e-15, rtol=1e-15)
    sol = _g_shot(params, d, r_eval=True)
    nodes = grid.nodes
    vals = np.empty(nodes.size)
    r0 = sol.t[0]
    vals[nodes >= r0] = sol.sol(nodes[nodes >= r0])[0]
    vals[nodes < r0] = d
    return LimitProfile(float(d), vals, float(sol.y[2, -1]), params.p)
