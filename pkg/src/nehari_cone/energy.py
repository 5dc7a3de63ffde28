"""Discrete energy, its gradient, the Nehari residual and the Nehari scaling.

The energy of a nodal field u is

    I(u) = sum_k c_k |s_k|^p / p + sum_i m_i (|u_i|^p / p - F(u_i)),

with s_k the cell slopes, c_k the shell measures and m_i the nodal weights of
the grid.  The gradient is taken from the epsilon-regularized version, in
which |s|^p/p is replaced by ((s^2 + eps^2)^{p/2} - eps^p)/p; its derivative
is psi(s) = (s^2 + eps^2)^{(p-2)/2} s.  All routines accept stacks of fields
along leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import TruncatedNonlinearity
from .params import ProblemParams, RadialGrid, grad_norm_p, lp_norm_p, slopes

NEHARI_RTOL = 1e-12


class NehariProjectionError(RuntimeError):
    pass


def psi(s, p, eps):
    return (s * s + eps * eps) ** (0.5 * (p - 2.0)) * s


def psi_inverse(z, p, eps, iters: int = 60):
    """Slope s with psi(s) = z.

    Newton on log|s|, started from the unregularized value |z|^{1/(p-1)}.
    The equation is increasing and concave in log|s|, so the iterates rise
    monotonically to the root.
    """
    z = np.asarray(z, dtype=float)
    az = np.abs(z)
    nz = az > 0.0
    with np.errstate(divide="ignore"):
        lz = np.log(np.where(nz, az, 1.0))
    L = lz / (p - 1.0)
    e2 = eps * eps
    for _ in range(iters):
        x = np.exp(2.0 * L)
        g = 0.5 * (p - 2.0) * np.log(x + e2) + L - lz
        step = g / (1.0 + (p - 2.0) * x / (x + e2))
        L = L - step
        if np.max(np.abs(np.where(nz, step, 0.0)), initial=0.0) < 1e-15:
            break
    return np.where(nz, np.sign(z) * np.exp(L), 0.0)


def dpsi(s, p, eps):
    s2 = s * s
    e2 = eps * eps
    return (s2 + e2) ** (0.5 * (p - 4.0)) * ((p - 1.0) * s2 + e2)


@dataclass(frozen=True, eq=False)
class EnergyModel:
    params: ProblemParams
    grid: RadialGrid
    eps_reg: float = 1e-8
    nonlinearity: TruncatedNonlinearity = field(init=False)

    def __post_init__(self):
        if not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")
        if self.grid.N != self.params.N:
            raise ValueError("grid and params disagree on the dimension N")
        object.__setattr__(self, "nonlinearity", TruncatedNonlinearity(self.params))

    @property
    def p(self) -> float:
        return self.params.p

    def with_params(self, params: ProblemParams) -> "EnergyModel":
        return EnergyModel(params, self.grid, self.eps_reg)

    # -- functionals -------------------------------------------------------
    def energy(self, u, regularized: bool = False):
        u = np.asarray(u, dtype=float)
        p = self.p
        s = slopes(self.grid, u)
        if regularized:
            e = self.eps_reg
            grad = ((s * s + e * e) ** (0.5 * p) - e**p) / p
        else:
            grad = np.abs(s) ** p / p
        local = np.abs(u) ** p / p - self.nonlinearity.F(u)
        with np.errstate(invalid="ignore"):
            return grad @ self.grid.cell_weights + local @ self.grid.weights

    def operator_weak(self, u):
        """Weak form of -Delta_p u + |u|^{p-2} u (regularized flux, Neumann)."""
        u = np.asarray(u, dtype=float)
        p, g = self.p, self.grid
        flux = g.cell_weights * psi(slopes(g, u), p, self.eps_reg) / g.h
        r = g.weights * (np.abs(u) ** (p - 1.0) * np.sign(u))
        r[..., :-1] -= flux
        r[..., 1:] += flux
        return r

    def first_variation(self, u):
        """Weak-form vector dI/du_i of the regularized energy."""
        u = np.asarray(u, dtype=float)
        return self.operator_weak(u) - self.grid.weights * self.nonlinearity.f(u)

    def gradient(self, u):
        """Riesz representative of I'(u) for the pairing sum_i m_i a_i b_i."""
        return self.first_variation(u) / self.grid.weights

    def pairing(self, a, b):
        return (np.asarray(a) * np.asarray(b)) @ self.grid.weights

    def nehari_residual(self, u):
        """I'(u)[u] = ||u||^p - int f(u) u with the unregularized gradient term."""
        u = np.asarray(u, dtype=float)
        with np.errstate(invalid="ignore"):
            return (
                grad_norm_p(self.grid, u, self.p)
                + lp_norm_p(self.grid, u, self.p)
                - (self.nonlinearity.f(u) * u) @ self.grid.weights
            )

    def norm_p(self, u):
        """||u||_{W^{1,p}}^p."""
        return grad_norm_p(self.grid, u, self.p) + lp_norm_p(self.grid, u, self.p)

    def norm(self, u):
        return self.norm_p(u) ** (1.0 / self.p)

    def hessian_bands(self, u, reaction: str = "full"):
        """Tridiagonal second variation of the regularized energy.

        ``reaction`` selects the zero-order part: "full" includes -f'(u),
        "operator" keeps only the monotone (p-1)|u|^{p-2} term (the
        linearization of -Delta_p u + |u|^{p-2} u).  Returns (diag, off).
        """
        u = np.asarray(u, dtype=float)
        p, g = self.p, self.grid
        k = g.cell_weights * dpsi(slopes(g, u), p, self.eps_reg) / g.h**2
        diag = np.zeros_like(u)
        diag[..., :-1] += k
        diag[..., 1:] += k
        zero = (p - 1.0) * (u * u + self.eps_reg**2) ** (0.5 * (p - 2.0))
        if reaction == "full":
            zero = zero - self.nonlinearity.df(u)
        diag += g.weights * zero
        return diag, -k

    # -- Nehari scaling ------------------------------------------------------
    def _ray_residual(self, u, a, t):
        """||u||^p - t^{1-p} int f(t u) u, strictly decreasing in t on the cone."""
        p = self.p
        with np.errstate(over="ignore", invalid="ignore"):
            integral = (self.nonlinearity.f(t[..., None] * u) * u) @ self.grid.weights
            return a - integral / t ** (p - 1.0)

    def nehari_scale(self, u, rtol: float = NEHARI_RTOL):
        """h_q(u): the unique t > 0 with t u on the Nehari set (stacked input)."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        U = np.atleast_2d(u)
        sup = np.max(np.abs(U), axis=-1)
        if np.any(sup <= 0.0) or not np.all(np.isfinite(U)):
            raise NehariProjectionError("Nehari projection needs a nonzero finite field")
        a = self.norm_p(U)
        cap = 10.0 * self.params.s0 / sup
        lo = 1.0 / sup
        hi = lo.copy()
        for _ in range(200):
            pos = self._ray_residual(U, a, lo) > 0.0
            if np.all(pos):
                break
            lo = np.where(pos, lo, 0.5 * lo)
        else:
            raise NehariProjectionError("could not find t with I'(tu)[u] > 0")
        for _ in range(200):
            neg = self._ray_residual(U, a, hi) < 0.0
            if np.all(neg):
                break
            if np.any(~neg & (hi > cap)):
                raise NehariProjectionError(
                    f"bracketing exceeded t = 10 s0/||u||_inf = {float(np.max(cap)):.4g}; input degenerate or outside the cone"
                )
            hi = np.where(neg, hi, 2.0 * hi)
        lo = np.minimum(lo, hi)
        llo, lhi = np.log(lo), np.log(hi)
        while np.max(lhi - llo) > rtol:
            mid = 0.5 * (llo + lhi)
            pos = self._ray_residual(U, a, np.exp(mid)) > 0.0
            llo = np.where(pos, mid, llo)
            lhi = np.where(pos, lhi, mid)
        t = np.exp(0.5 * (llo + lhi))
        return float(t[0]) if single else t

    def nehari_project(self, u):
        """Return (h_q(u), h_q(u) u)."""
        u = np.asarray(u, dtype=float)
        t = self.nehari_scale(u)
        return t, np.asarray(t)[..., None] * u if u.ndim > 1 else t * u
