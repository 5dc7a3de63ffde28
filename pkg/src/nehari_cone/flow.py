"""The inverse operator T, the fixed-point map T~ = T o f_q and the descent flow.

T(w) is the solution v of -Delta_p v + |v|^{p-2} v = w with homogeneous
Neumann data.  Discretely v minimizes the strictly convex functional

    J(v) = sum_k c_k Psi_eps(s_k) + sum_i m_i (|v_i|^p/p - w_i v_i),

and a damped Newton iteration converges from the pointwise guess
v = |w|^{1/(p-1)} sign(w), which is exact for constants.
Fixed points of T~ are exactly the critical points of the energy, and
u + tau (T~(u) - u) is a descent direction for it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .energy import EnergyModel, dpsi, psi, psi_inverse
from .params import cone_project, in_cone

T_TOL = 1e-10
DAMPING_FLOOR = 1e-6


class NewtonError(RuntimeError):
    pass


def _banded_blocks(diag, off):
    """(3, K*L) banded matrix for K independent symmetric tridiagonal blocks."""
    K, L = diag.shape
    sup = np.zeros((K, L))
    sup[:, 1:] = off
    sup = sup.ravel()
    ab = np.zeros((3, K * L))
    ab[0, 1:] = sup[1:]
    ab[1] = diag.ravel()
    ab[2, :-1] = sup[1:]
    return ab


def _rowmax(a):
    return np.max(np.abs(np.atleast_2d(a)), axis=-1)


def _mixed_newton(model: EnergyModel, v, reaction, tol_abs, max_iter, fixed_last=False):
    """Damped Newton for  -div(psi(v')) + reaction(v) = 0  in mixed form.

    The unknowns are the nodal values v_i and the cell fluxes z_k = psi(s_k),
    interleaved as v_0, z_0, v_1, z_1, ... so that the Jacobian is
    tridiagonal.  The slope equation uses the inverse flux psi^{-1}, which is
    smooth where psi itself is nearly singular (small slopes, p < 2); the
    primal iteration crawls there.  At convergence z_k = psi(s_k) and the
    node rows are exactly the primal weak residual.

    ``reaction(V)`` returns (values, derivatives), both already multiplied by
    the nodal weights.  Rows of a stack are damped independently: the step
    is halved while the residual does not decrease, down to 1e-6.
    """
    g, p, eps = model.grid, model.p, model.eps_reg
    c, h = g.cell_weights, g.h
    V = np.atleast_2d(np.array(v, dtype=float))
    K, n = V.shape
    Z = psi(np.diff(V, axis=-1) / h, p, eps)

    def residual(V, Z):
        S = psi_inverse(Z, p, eps)
        A = c * (np.diff(V, axis=-1) / h - S)
        B = np.array(reaction(V)[0], dtype=float)
        B[:, :-1] -= c * Z / h
        B[:, 1:] += c * Z / h
        if fixed_last:
            B[:, -1] = 0.0
        R = np.empty((K, 2 * n - 1))
        R[:, 0::2] = B
        R[:, 1::2] = A
        return R, S

    R, S = residual(V, Z)
    norm = _rowmax(R)
    lam = np.ones(K)
    for it in range(max_iter + 1):
        if np.all(norm <= tol_abs):
            return V, it, norm
        if it == max_iter:
            break
        _, dv = reaction(V)
        dv = np.array(dv, dtype=float)
        if fixed_last:
            dv[:, -1] = 1.0
        D = np.empty((K, 2 * n - 1))
        D[:, 0::2] = dv
        D[:, 1::2] = -c / dpsi(S, p, eps)
        U = np.empty((K, 2 * n - 2))
        U[:, 0::2] = -c / h
        U[:, 1::2] = c / h
        if fixed_last:
            U[:, -1] = 0.0
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(R))):
            raise NewtonError("non-finite Jacobian or residual")
        try:
            step = solve_banded((1, 1), _banded_blocks(D, U), -R.ravel(), check_finite=False).reshape(K, -1)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular Jacobian: {exc}") from exc
        active = norm > tol_abs
        lam = np.minimum(1.0, 2.0 * lam)
        while True:
            a = np.where(active, lam, 0.0)[:, None]
            Vt, Zt = V + a * step[:, 0::2], Z + a * step[:, 1::2]
            with np.errstate(all="ignore"):
                Rt, St = residual(Vt, Zt)
            nt = _rowmax(Rt)
            bad = active & ~(nt < norm) & (lam > DAMPING_FLOOR) & ~(nt <= tol_abs)
            if not np.any(bad):
                break
            lam = np.where(bad, 0.5 * lam, lam)
        V, Z, R, S = Vt, Zt, Rt, St
        norm = np.where(active, nt, norm)
    raise NewtonError(f"Newton did not converge in {max_iter} iterations (residual {float(np.max(norm)):.3e})")


def solve_T(model: EnergyModel, w, tol: float = T_TOL, max_iter: int = 60):
    """Discrete T(w): Neumann solution of -Delta_p v + |v|^{p-2} v = w.

    Accepts a stack of right-hand sides.  The stopping rule is a max-norm
    weak residual below ``tol`` times max(1, max |m w|, max |v0|): slopes are
    differences of O(|v|) numbers divided by h, so the attainable residual
    grows with the size of the solution.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise NewtonError("right-hand side is not finite")
    p, eps = model.p, model.eps_reg
    m = model.grid.weights
    W = np.atleast_2d(w)
    mw = m * W
    v0 = np.abs(W) ** (1.0 / (p - 1.0)) * np.sign(W)
    scale = np.maximum(1.0, np.maximum(_rowmax(mw), _rowmax(v0)))

    def reaction(V):
        val = m * (np.abs(V) ** (p - 1.0) * np.sign(V)) - mw
        return val, m * (p - 1.0) * (V * V + eps * eps) ** (0.5 * (p - 2.0))

    V, _, _ = _mixed_newton(model, v0, reaction, tol * scale, max_iter)
    return V.reshape(w.shape)


def tilde_T(model: EnergyModel, u, **kw):
    """T~(u) = T(f_q(u))."""
    return solve_T(model, model.nonlinearity.f(np.asarray(u, dtype=float)), **kw)


def fixed_point_residual(model: EnergyModel, u, Tu=None):
    """||u - T~(u)||_{W^{1,p}}."""
    if Tu is None:
        Tu = tilde_T(model, u)
    return model.norm(np.asarray(u) - Tu)


def newton_critical_point(model: EnergyModel, u0, tol: float = 1e-11, max_iter: int = 80):
    """Damped Newton on the full first variation I'(u) = 0 (weak form).

    The Jacobian is indefinite at saddle points, so a general banded solve
    is used.  Returns (u, iterations); raises NewtonError on failure.
    """
    p, eps = model.p, model.eps_reg
    m = model.grid.weights
    nl = model.nonlinearity

    def reaction(V):
        val = m * (np.abs(V) ** (p - 1.0) * np.sign(V) - nl.f(V))
        der = m * ((p - 1.0) * (V * V + eps * eps) ** (0.5 * (p - 2.0)) - nl.df(V))
        return val, der

    V, it, _ = _mixed_newton(model, u0, reaction, tol, max_iter)
    return V.reshape(np.shape(u0)), it


def dirichlet_limit_profile(model: EnergyModel, tol: float = 1e-12):
    """Minimizer of ||v||^p_{W^{1,p}}/p over fields with v(1) = 1.

    This is the discrete solution of -Delta_p G + G^{p-1} = 0, G = 1 on the
    boundary; the problem is strictly convex and Newton converges from a
    quadratic profile.
    """
    g = model.grid
    p, eps = model.p, model.eps_reg
    m = g.weights

    def reaction(V):
        return m * (np.abs(V) ** (p - 1.0) * np.sign(V)), m * (p - 1.0) * (V * V + eps * eps) ** (0.5 * (p - 2.0))

    v0 = 0.5 + 0.5 * g.nodes**2
    V, _, _ = _mixed_newton(model, v0, reaction, tol, 200, fixed_last=True)
    return V[0]


@dataclass
class FlowState:
    u: np.ndarray
    energy: float
    residual_norm: float
    step: float
    iter: int
    converged: bool = False
    reason: str = ""
    energies: list = field(default_factory=list)


class _Trace:
    def __init__(self, target):
        self._own = None
        if target is None:
            self.writer = None
            return
        if isinstance(target, (str, Path)):
            self._own = open(target, "w", newline="")
            target = self._own
        self.writer = csv.writer(target, lineterminator="\n")
        self.writer.writerow(["iter", "energy", "residual_norm", "step"])

    def row(self, st: FlowState):
        if self.writer is not None:
            self.writer.writerow([st.iter, repr(float(st.energy)), repr(float(st.residual_norm)), repr(float(st.step))])

    def close(self):
        if self._own is not None:
            self._own.close()


def descend(
    model: EnergyModel,
    u0,
    stop: float = 1e-8,
    max_iter: int = 500,
    on_nehari: bool = False,
    step: float = 1.0,
    min_step: float = 1e-10,
    trace=None,
) -> FlowState:
    """Backtracked descent along T~(u) - u inside the cone.

    Each accepted iterate is cone_project(u + step (T~(u) - u)), optionally
    rescaled onto the Nehari set, and never has larger energy than the
    previous one.  Stops when ||u - T~(u)||_{W^{1,p}} < ``stop``, when
    ``max_iter`` is reached, when backtracking falls below ``min_step``, or
    when T~ cannot be evaluated at the next iterate (the unprojected flow can
    run off to -infinity in energy); the last good state is returned.
    ``trace`` may be a path or text stream receiving CSV rows.
    """
    u = np.array(u0, dtype=float)
    weights = model.grid.weights
    if not np.any(u):
        return FlowState(u, 0.0, 0.0, step, 0, True, "zero field is a fixed point", [0.0])
    u = cone_project(u, weights)
    if on_nehari:
        _, u = model.nehari_project(u)
    E = float(model.energy(u))
    Tu = tilde_T(model, u)
    r = float(model.norm(u - Tu))
    st = FlowState(u, E, r, step, 0, energies=[E])
    tr = _Trace(trace)
    tr.row(st)
    try:
        while st.residual_norm >= stop and st.iter < max_iter:
            d = Tu - u
            tau = min(1.0, 2.0 * st.step)
            while True:
                cand = cone_project(u + tau * d, weights)
                if on_nehari:
                    _, cand = model.nehari_project(cand)
                Ec = float(model.energy(cand))
                if Ec <= E:
                    break
                tau *= 0.5
                if tau < min_step:
                    st.reason = "line search stalled"
                    return st
            try:
                Tc = tilde_T(model, cand)
            except NewtonError as exc:
                st.reason = f"T~ failed after an accepted step: {exc}"
                return st
            u, E, Tu = cand, Ec, Tc
            st.u, st.energy, st.step = u, E, tau
            st.residual_norm = float(model.norm(u - Tu))
            st.iter += 1
            st.energies.append(E)
            tr.row(st)
    finally:
        tr.close()
    st.converged = st.residual_norm < stop
    st.reason = "converged" if st.converged else (st.reason or "max_iter reached")
    assert in_cone(st.u, 1e-12)
    return st


def trace_csv(model: EnergyModel, u0, **kw) -> str:
    """Run :func:`descend` and return its trace as CSV text."""
    buf = io.StringIO()
    descend(model, u0, trace=buf, **kw)
    return buf.getvalue()
