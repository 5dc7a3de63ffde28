"""Truncated power nonlinearity f_q and its primitives.

Below the threshold s0 the nonlinearity is the pure power s^{q-1}; above it
the growth is cut down to s^{ell-1} with a C^1 junction.  Large powers are
formed in log space, so values that do not fit in a double come out as +inf
rather than nan.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ProblemParams


def _pow(s, a):
    """s**a for s >= 0 through exp(a log s); 0**a = 0 for a > 0."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(a * np.log(s))


def expm1_minus_linear(a: float, L):
    """(exp(aL) - 1 - aL)/a, accurate when aL is tiny."""
    L = np.asarray(L, dtype=float)
    x = a * L
    small = np.abs(x) < 1e-3
    with np.errstate(over="ignore", invalid="ignore"):
        direct = (np.expm1(x) - x) / a
    series = L * x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    return np.where(small, series, direct)


@dataclass(frozen=True)
class TruncatedNonlinearity:
    params: ProblemParams

    @property
    def kappa(self) -> float:
        P = self.params
        return (P.q - 1.0) / (P.ell - 1.0)

    def pieces(self, s):
        """(power branch, truncated branch) of f_q, both evaluated at s > 0."""
        P = self.params
        s = np.asarray(s, dtype=float)
        low = _pow(s, P.q - 1.0)
        bracket = 1.0 + self.kappa * (_pow(s / P.s0, P.ell - 1.0) - 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            high = np.exp((P.q - 1.0) * np.log(P.s0) + np.log(bracket))
        return low, high

    def f(self, s):
        P = self.params
        s = np.asarray(s, dtype=float)
        sp = np.maximum(s, 0.0)
        low, _ = self.pieces(sp)
        _, high = self.pieces(np.maximum(sp, P.s0))
        out = np.where(sp <= P.s0, low, high)
        return np.where(s > 0.0, out, 0.0)

    def df(self, s):
        """f_q'(s); zero for s < 0."""
        P = self.params
        s = np.asarray(s, dtype=float)
        sp = np.maximum(s, 0.0)
        low = (P.q - 1.0) * _pow(sp, P.q - 2.0)
        x = np.maximum(sp, P.s0) / P.s0
        with np.errstate(over="ignore"):
            high = (P.q - 1.0) * np.exp((P.q - 2.0) * np.log(P.s0) + (P.ell - 2.0) * np.log(x))
        out = np.where(sp <= P.s0, low, high)
        return np.where(s > 0.0, out, 0.0)

    def F(self, s):
        """Closed-form primitive F_q(s) = int_0^s f_q."""
        P = self.params
        s = np.asarray(s, dtype=float)
        sp = np.maximum(s, 0.0)
        low = _pow(sp, P.q) / P.q
        x = np.maximum(sp, P.s0) / P.s0
        k = self.kappa
        bracket = 1.0 / P.q + (1.0 - k) * (x - 1.0) + k * (_pow(x, P.ell) - 1.0) / P.ell
        with np.errstate(over="ignore", invalid="ignore"):
            high = np.exp(P.q * np.log(P.s0) + np.log(np.maximum(bracket, 1e-300)))
        out = np.where(sp <= P.s0, low, high)
        return np.where(s > 0.0, out, 0.0)

    def Phi(self, s):
        """F_q(s) - F_q(1)."""
        return self.F(s) - 1.0 / self.params.q

    def potential(self, s):
        """int_1^s (f_q(t) - t^{p-1}) dt, the potential in the first integral H.

        Nonnegative with a double zero at s = 1; evaluated without cancellation
        near 1.
        """
        P = self.params
        s = np.asarray(s, dtype=float)
        sp = np.maximum(s, 0.0)
        with np.errstate(divide="ignore"):
            L = np.log(np.where(sp > 0.0, sp, 1.0))
        near = expm1_minus_linear(P.q, L) - expm1_minus_linear(P.p, L)
        near = np.where(sp > 0.0, near, 1.0 / P.p - 1.0 / P.q)
        far = self.Phi(sp) - (_pow(sp, P.p) - 1.0) / P.p
        return np.where(sp <= P.s0, near, far)

    def scaled(self, t, s):
        """t -> f_q(t s)/t^{p-1}, increasing in t for fixed s > 0."""
        t = np.asarray(t, dtype=float)
        return self.f(t * s) / t ** (self.params.p - 1.0)
