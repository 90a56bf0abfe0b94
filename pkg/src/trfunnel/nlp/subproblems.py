"""The subproblems solved at each outer iteration.

All trust regions here are infinity-norm boxes, so every subproblem is a
smooth NLP with simple bounds. The criticality problem is a linear program.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.optimize import linprog

from .core import FEAS_TOL, INFEASIBLE, SOLVED, NlpSolution, NlpSpec, kkt_residuals, primal_residual, solve_nlp

logger = logging.getLogger(__name__)


class CriticalityWarning(RuntimeWarning):
    """The linearised constraints of the criticality problem are inconsistent."""


def linking_matrix(problem, J_r):
    """Rows ``[-J_r, I, 0]`` expressing ``v_y - J_r v_w = 0``."""
    L = np.zeros((problem.n_y, problem.n))
    L[:, problem.w_slice] = -J_r
    L[:, problem.y_slice] = np.eye(problem.n_y)
    return L


def criticality_lp(grad_f, A_eq, A_ub, b_ub, lo, hi):
    """Solve ``min grad_f . v`` over the polyhedron and return ``(chi, v, ok)``.

    ``b_ub`` is clipped at zero and ``lo <= 0 <= hi`` is enforced so that
    ``v = 0`` is always feasible up to the solver tolerance.
    """
    n = grad_f.size
    b_ub = np.maximum(np.asarray(b_ub, dtype=float), 0.0)
    lo = np.minimum(lo, 0.0)
    hi = np.maximum(hi, 0.0)
    kw = {}
    if A_eq is not None and A_eq.size:
        kw["A_eq"], kw["b_eq"] = A_eq, np.zeros(A_eq.shape[0])
    if A_ub is not None and A_ub.size:
        kw["A_ub"], kw["b_ub"] = A_ub, b_ub
    res = linprog(grad_f, bounds=list(zip(lo, hi)), method="highs", **kw)
    if res.status != 0:
        return 0.0, np.zeros(n), False
    return abs(min(float(res.fun), 0.0)), np.asarray(res.x), True


def criticality_measure(problem, rm, x, ledger=None):
    """First-order criticality ``chi`` of the linearised model problem at ``x``.

    ``chi = |min grad f . v|`` subject to the linearised equalities and
    inequalities, the model linking ``v_y = J_r v_w``, the variable bounds,
    and ``||v||_inf <= 1``. Uses no black-box evaluations.

    Returns
    -------
    float
        ``chi >= 0``. An inconsistent linearisation yields ``0`` with a
        :class:`CriticalityWarning`.
    """
    x = np.asarray(x, dtype=float)
    w = x[problem.w_slice]
    gf = problem.grad_f(x)
    Jh = problem.jac_h(x)
    L = linking_matrix(problem, rm.jacobian(w))
    A_eq = np.vstack([Jh, L])
    A_ub = problem.jac_g(x)
    b_ub = -problem.g(x)
    lo = np.maximum(-1.0, problem.lb - x)
    hi = np.minimum(1.0, problem.ub - x)
    chi, _, ok = criticality_lp(gf, A_eq, A_ub, b_ub, lo, hi)
    if not ok:
        warnings.warn("criticality LP infeasible; treating chi as 0", CriticalityWarning, stacklevel=2)
    if ledger is not None:
        ledger.charge_glass_box()
    return chi


def _ls_scale(a0):
    """Objective scale for ``0.5 * ||e||^2`` with ``||e|| = a0`` at the start.

    Residuals above one are normalised to a start value of 0.5. Smaller ones
    are scaled by ``1/a0`` only: that keeps the start value well above the
    SLSQP stopping tolerance without inflating the gradient, which stalls its
    identity-Hessian first step.
    """
    return 1.0 / max(a0 * max(a0, 1.0), 1e-300)


def compatibility_radius(Delta, params):
    """Shrunk radius ``kappa_Delta * Delta * min(1, kappa_mu * Delta**mu)``."""
    return params.kappa_Delta * Delta * min(1.0, params.kappa_mu * Delta**params.mu)


def _sub_spec(problem, x_fixed, free, obj, obj_grad, center, radius, with_ineq=True, extra_eq=None):
    """NlpSpec over the coordinates ``free`` of ``x`` with the rest held at ``x_fixed``."""
    base = np.asarray(x_fixed, dtype=float)

    def full(v):
        x = base.copy()
        x[free] = v
        return x

    def eq(v):
        x = full(v)
        parts = [problem.h(x)]
        if extra_eq is not None:
            parts.append(extra_eq[0](x))
        return np.concatenate(parts)

    def eq_jac(v):
        x = full(v)
        parts = [problem.jac_h(x)]
        if extra_eq is not None:
            parts.append(extra_eq[1](x))
        return np.vstack(parts)[:, free]

    spec = NlpSpec(
        fun=lambda v: obj(full(v)),
        grad=lambda v: obj_grad(full(v))[free],
        x0=base[free],
        lb=problem.lb[free],
        ub=problem.ub[free],
        eq=eq,
        eq_jac=eq_jac,
        ineq=(lambda v: problem.g(full(v))) if with_ineq else None,
        ineq_jac=(lambda v: problem.jac_g(full(v))[:, free]) if with_ineq else None,
        tr_center=None if center is None else np.asarray(center, dtype=float)[free],
        tr_radius=radius,
        tr_norm="inf",
    )
    return spec, full


def compatibility_step(problem, rm, x, Delta, params, engine="slsqp", tol=1e-8):
    """Normal step towards ``y^k = r(w)`` inside the shrunk trust region.

    Minimises ``||y^k - r(w)||`` over ``(w, z)`` with ``y`` held at ``y^k``,
    subject to the glass-box constraints and the box of radius
    :func:`compatibility_radius` about ``x^k``.

    Returns
    -------
    d : ndarray
        Step from ``x`` (zero in the ``y`` block).
    alpha : float
        Optimal value ``||y^k - r(w^k + d_w)||``.
    solution : NlpSolution
    """
    x = np.asarray(x, dtype=float)
    w0, yk, _ = problem.split(x)
    alpha0 = float(np.linalg.norm(yk - rm.predict(w0)))
    free = np.r_[np.arange(problem.n_w), np.arange(problem.n_w + problem.n_y, problem.n)]
    radius = compatibility_radius(Delta, params)
    scale = _ls_scale(alpha0)

    def obj(xx):
        e = xx[problem.y_slice] - rm.predict(xx[problem.w_slice])
        return 0.5 * scale * float(e @ e)

    def obj_grad(xx):
        w = xx[problem.w_slice]
        e = xx[problem.y_slice] - rm.predict(w)
        g = np.zeros(problem.n)
        g[problem.w_slice] = -scale * rm.jacobian(w).T @ e
        return g

    if alpha0 == 0.0:
        spec, _ = _sub_spec(problem, x, free, obj, obj_grad, x, radius)
        stat, feas, comp, mult = kkt_residuals(spec, spec.x0)
        return np.zeros(problem.n), 0.0, NlpSolution(spec.x0, 0.0, stat, feas, comp, SOLVED, mult)
    spec, full = _sub_spec(problem, x, free, obj, obj_grad, x, radius)
    sol = solve_nlp(spec, tol=tol, engine=engine)
    xc = full(sol.x)
    alpha = float(np.linalg.norm(yk - rm.predict(xc[problem.w_slice])))
    if alpha > alpha0 or sol.feasibility > FEAS_TOL:
        return np.zeros(problem.n), alpha0, sol
    return xc - x, alpha, sol


def solve_trsp(problem, rm, x, d, Delta, ledger=None, engine="slsqp", tol=1e-8):
    """Trust-region subproblem with the reduced model substituted for ``t``.

    Minimises ``f`` subject to ``h = 0``, ``g <= 0``, ``y = r(w)``, the
    bounds and ``||x - x^k||_inf <= Delta``, starting from ``x^k + d``.

    Returns
    -------
    s : ndarray
        Step ``x_s - x^k``.
    x_s : ndarray
    f_s : float
    solution : NlpSolution
    """
    x = np.asarray(x, dtype=float)
    start = x + np.asarray(d, dtype=float)
    free = np.arange(problem.n)

    def link(xx):
        return xx[problem.y_slice] - rm.predict(xx[problem.w_slice])

    def link_jac(xx):
        return linking_matrix(problem, rm.jacobian(xx[problem.w_slice]))

    spec, full = _sub_spec(problem, start, free, problem.f, problem.grad_f, x, Delta,
                           extra_eq=(link, link_jac))
    sol = solve_nlp(spec, tol=tol, engine=engine)
    if sol.status == INFEASIBLE:
        logger.debug("TRSP infeasible: %s", sol.message)
    xs = full(sol.x)
    # Snap y onto the model so the linking constraint holds to rounding.
    y_link = rm.predict(xs[problem.w_slice])
    ylo, yhi = problem.lb[problem.y_slice], problem.ub[problem.y_slice]
    if np.all(y_link >= ylo) and np.all(y_link <= yhi):
        xs[problem.y_slice] = y_link
    if ledger is not None:
        ledger.charge_glass_box()
    return xs - x, xs, problem.f(xs), sol


def restoration_step(problem, rm, x, Delta, engine="slsqp", tol=1e-8):
    """Move towards ``y = r(w)`` with ``y`` free, inside the box of radius ``Delta``.

    Returns
    -------
    x_r : ndarray
    alpha_r : float
        ``||y_r - r(w_r)||`` at the returned point.
    solution : NlpSolution
    """
    x = np.asarray(x, dtype=float)
    e0 = x[problem.y_slice] - rm.predict(x[problem.w_slice])
    a0 = float(np.linalg.norm(e0))
    scale = _ls_scale(a0)

    def obj(xx):
        e = xx[problem.y_slice] - rm.predict(xx[problem.w_slice])
        return 0.5 * scale * float(e @ e)

    def obj_grad(xx):
        w = xx[problem.w_slice]
        e = xx[problem.y_slice] - rm.predict(w)
        g = np.zeros(problem.n)
        g[problem.w_slice] = -scale * rm.jacobian(w).T @ e
        g[problem.y_slice] = scale * e
        return g

    spec, full = _sub_spec(problem, x, np.arange(problem.n), obj, obj_grad, x, Delta)
    sol = solve_nlp(spec, tol=tol, engine=engine)
    xr = full(sol.x)
    ar = float(np.linalg.norm(xr[problem.y_slice] - rm.predict(xr[problem.w_slice])))
    if sol.feasibility > FEAS_TOL or ar > a0:
        return x.copy(), a0, sol
    return xr, ar, sol


def project_glass_feasible(problem, x0, engine="slsqp", tol=1e-10):
    """Closest point to ``x0`` (in scaled distance) satisfying ``h``, ``g`` and the bounds."""
    x0 = np.clip(np.asarray(x0, dtype=float), problem.lb, problem.ub)
    s = 1.0 / np.maximum(1.0, np.abs(x0)) ** 2
    spec = NlpSpec(
        fun=lambda x: 0.5 * float(np.sum(s * (x - x0) ** 2)),
        grad=lambda x: s * (x - x0),
        x0=x0, lb=problem.lb, ub=problem.ub,
        eq=problem.h if problem.n_eq else None, eq_jac=problem.jac_h if problem.n_eq else None,
        ineq=problem.g if problem.n_ineq else None, ineq_jac=problem.jac_g if problem.n_ineq else None,
    )
    if primal_residual(spec, x0) <= 1e-10:
        return x0, None
    sol = solve_nlp(spec, tol=tol, engine=engine)
    return sol.x, sol
