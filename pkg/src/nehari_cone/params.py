"""Problem parameters, the radial grid and discrete radial fields.

A radial function on the unit ball B of R^N is stored by its values on a
uniform grid of [0, 1].  Integrals over B carry the weight
omega_{N-1} r^{N-1}, where omega_{N-1} is the surface measure of the unit
sphere; for N = 1 the "sphere" is the two points {-1, 1} and B = (-1, 1).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.special import gamma as _gamma

DEFAULT_C_EMB = 10.0
DEFAULT_M = 2048


class ParameterError(ValueError):
    """Raised when problem parameters violate one of the structural inequalities."""


def sphere_measure(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return float(2.0 * math.pi ** (N / 2.0) / _gamma(N / 2.0))


def ball_measure(N: int) -> float:
    return sphere_measure(N) / N


def critical_exponent(p: float, N: int) -> float:
    """Sobolev exponent p* = Np/(N-p), or +inf when N <= p."""
    return N * p / (N - p) if N > p else math.inf


@dataclass(frozen=True)
class ProblemParams:
    p: float
    q: float
    N: int
    ell: float
    s0: float
    ball_measure: float

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def p_star(self) -> float:
        return critical_exponent(self.p, self.N)

    def with_q(self, q: float, ell: float | None = None) -> "ProblemParams":
        """Same p, N, s0 with a new exponent q (and optionally a new ell)."""
        ell = self.ell if ell is None else ell
        _check_exponents(self.p, q, self.N, ell)
        return replace(self, q=float(q), ell=float(ell))


def _check_exponents(p, q, N, ell):
    if not int(N) == N or N < 1:
        raise ParameterError(f"N must be an integer >= 1, got N={N}")
    if not 1.0 < p < 2.0:
        raise ParameterError(f"need 1 < p < 2, got p={p}")
    if not q > 2.0:
        raise ParameterError(f"need q > 2, got q={q}")
    if not ell > p:
        raise ParameterError(f"need ell > p, got ell={ell} <= p={p}")
    if not q > ell:
        raise ParameterError(f"need q > ell, got q={q} <= ell={ell}")
    pstar = critical_exponent(p, N)
    if not ell < pstar:
        raise ParameterError(f"need ell < p* = {pstar:g}, got ell={ell}")


def default_ell(p: float, q: float, N: int) -> float:
    """A subcritical ell strictly between p and min(q, p*, p + 2)."""
    top = min(q, critical_exponent(p, N), p + 2.0)
    return 0.5 * (p + top)


def s0_threshold(p: float, N: int, c_emb: float = DEFAULT_C_EMB) -> float:
    pc = p / (p - 1.0)
    return max(2.0 + pc ** (1.0 / p), c_emb * (1.0 + ball_measure(N) ** (1.0 / p)))


def make_params(p, q, N, ell=None, s0_override=None, c_emb=DEFAULT_C_EMB) -> ProblemParams:
    """Validate exponents and build the truncated-problem parameters.

    ``s0`` defaults to max{2 + (p')^{1/p}, c_emb (1 + |B|^{1/p})}.  An override
    must still exceed the first term so that the truncation leaves every cone
    solution untouched.
    """
    if ell is None:
        ell = default_ell(p, q, N)
    _check_exponents(p, q, N, ell)
    floor = s0_threshold(p, int(N), c_emb)
    if s0_override is not None:
        lower = 2.0 + (p / (p - 1.0)) ** (1.0 / p)
        if not s0_override >= lower:
            raise ParameterError(f"need s0 >= 2 + (p')^(1/p) = {lower:.6g}, got s0={s0_override}")
        s0 = float(s0_override)
    else:
        s0 = floor
    return ProblemParams(float(p), float(q), int(N), float(ell), float(s0), float(ball_measure(int(N))))


@dataclass(frozen=True)
class SolverConfig:
    """Configuration record: everything needed to rebuild params and grid."""

    p: float = 1.97
    q: float = 40.0
    N: int = 1
    ell: float | None = None
    s0_override: float | None = None
    c_emb: float = DEFAULT_C_EMB
    M: int = DEFAULT_M

    def params(self) -> ProblemParams:
        return make_params(self.p, self.q, self.N, self.ell, self.s0_override, self.c_emb)

    def grid(self) -> "RadialGrid":
        return RadialGrid.uniform(self.M, self.N)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "SolverConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)


def _cell_moments(a: np.ndarray, b: np.ndarray, N: int):
    """Exact integrals of r^{N-1}, r^{N-1}(b-r)/h, r^{N-1}(r-a)/h over [a, b]."""
    npts = max(1, (N + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(npts)
    h = b - a
    r = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x[None, :]
    wr = 0.5 * h[:, None] * w[None, :] * r ** (N - 1)
    lam = (r - a[:, None]) / h[:, None]
    whole = wr.sum(axis=1)
    right = (wr * lam).sum(axis=1)
    return whole, whole - right, right


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform grid r_i = i/M with exact product-trapezoid weights.

    ``weights[i]`` integrates the piecewise-linear interpolant of a nodal
    field against omega r^{N-1} dr, so sums of weights equal |B| and the rule
    is exact for constants and for u(r) = r.  ``cell_weights[k]`` is the
    measure of the shell r_k < |x| < r_{k+1}, used for gradient terms.
    """

    nodes: np.ndarray
    weights: np.ndarray
    cell_weights: np.ndarray
    N: int
    h: float = field(default=0.0)

    @classmethod
    def uniform(cls, M: int = DEFAULT_M, N: int = 1) -> "RadialGrid":
        if M < 2:
            raise ParameterError(f"grid needs M >= 2 cells, got {M}")
        nodes = np.linspace(0.0, 1.0, M + 1)
        omega = sphere_measure(N)
        whole, left, right = _cell_moments(nodes[:-1], nodes[1:], N)
        weights = np.zeros(M + 1)
        weights[:-1] += omega * left
        weights[1:] += omega * right
        for arr in (nodes, weights):
            arr.setflags(write=False)
        cells = omega * whole
        cells.setflags(write=False)
        return cls(nodes, weights, cells, int(N), 1.0 / M)

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def measure(self) -> float:
        return ball_measure(self.N)

    def field(self, fn) -> np.ndarray:
        """Sample a callable r -> u(r) on the nodes."""
        return np.asarray(fn(self.nodes), dtype=float) * np.ones(self.size)

    def resample(self, values: np.ndarray, other: "RadialGrid") -> np.ndarray:
        """Piecewise-linear transfer of a field on this grid to ``other``."""
        return np.interp(other.nodes, self.nodes, values)


def _check_field(grid: RadialGrid, values) -> np.ndarray:
    u = np.asarray(values, dtype=float)
    if u.shape[-1] != grid.size:
        raise ValueError(f"field has {u.shape[-1]} values, grid has {grid.size} nodes")
    return u


def integrate(grid: RadialGrid, values) -> np.ndarray | float:
    """Integral over B of a radial field (works on stacks of fields)."""
    u = _check_field(grid, values)
    return u @ grid.weights


def slopes(grid: RadialGrid, values) -> np.ndarray:
    """Cell slopes (u_{k+1} - u_k)/h: the derivative of the P1 interpolant."""
    u = _check_field(grid, values)
    return np.diff(u, axis=-1) / grid.h


def derivative(grid: RadialGrid, values) -> np.ndarray:
    """Nodal u'(r): central differences, one-sided at r = 1, and u'(0) = 0."""
    u = _check_field(grid, values)
    du = np.gradient(u, grid.h, axis=-1, edge_order=1)
    du[..., 0] = 0.0
    return du


def lp_norm_p(grid: RadialGrid, values, p: float) -> np.ndarray | float:
    u = _check_field(grid, values)
    return np.abs(u) ** p @ grid.weights


def grad_norm_p(grid: RadialGrid, values, p: float) -> np.ndarray | float:
    return np.abs(slopes(grid, values)) ** p @ grid.cell_weights


def w1p_norm(grid: RadialGrid, values, p: float) -> np.ndarray | float:
    """W^{1,p}(B) norm of the P1 interpolant (lumped zero-order part)."""
    return (grad_norm_p(grid, values, p) + lp_norm_p(grid, values, p)) ** (1.0 / p)


def sup_distance(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def in_cone(values, tol: float = 0.0) -> bool:
    """Cone predicate: nonnegative and nondecreasing (up to ``tol``)."""
    u = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(u)):
        return False
    return bool(np.all(u >= -tol) and np.all(np.diff(u, axis=-1) >= -tol))


def cone_project(values, weights=None) -> np.ndarray:
    """Weighted L2 projection onto nonnegative nondecreasing sequences.

    Isotonic regression followed by clipping at zero; the clipped isotonic fit
    is the projection onto the intersection.  Accepts a stack of fields.
    """
    u = np.asarray(values, dtype=float)
    if u.ndim > 1:
        return np.stack([cone_project(row, weights) for row in u.reshape(-1, u.shape[-1])]).reshape(u.shape)
    if np.all(np.diff(u) >= 0.0):
        return np.maximum(u, 0.0)
    if weights is not None:
        # zero weights (r = 0 for N >= 2 with plain trapezoid) would make pools undefined
        weights = np.maximum(np.asarray(weights, dtype=float), 1e-300)
    fit = isotonic_regression(u, weights=weights, increasing=True).x
    return np.maximum(fit, 0.0)
