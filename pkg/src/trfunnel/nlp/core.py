"""Smooth constrained NLP contract and bundled engines.

Problems are stated as::

    min f(x)  s.t.  c_eq(x) = 0,  c_in(x) <= 0,  lb <= x <= ub,  ||x - c|| <= r

through :class:`NlpSpec`. :func:`solve_nlp` dispatches to an engine by name
and always reports first-order residuals computed the same way, so engines
are interchangeable. Further engines can be added with :func:`register_engine`.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import lsq_linear, minimize

logger = logging.getLogger(__name__)

SOLVED = "Solved"
INEXACT = "Inexact"
INFEASIBLE = "Infeasible"
MAX_INNER = "MaxInner"
NUMERIC_FAILURE = "NumericFailure"

#: Primal residual above which a returned point is declared infeasible.
FEAS_TOL = 1e-6
#: Distance below which a constraint or bound counts as active.
ACTIVE_TOL = 1e-6


def _empty(x):
    return np.zeros(0)


@dataclass
class NlpSpec:
    """Smooth NLP with optional trust-region ball.

    Parameters
    ----------
    fun, grad : callable
        Objective and its gradient.
    x0 : ndarray
        Initial point; clipped into the effective box before solving.
    lb, ub : ndarray, optional
        Variable bounds (infinite entries allowed).
    eq, eq_jac : callable, optional
        Equality constraints ``c_eq(x) = 0`` and Jacobian.
    ineq, ineq_jac : callable, optional
        Inequality constraints ``c_in(x) <= 0`` and Jacobian.
    tr_center, tr_radius : optional
        Trust-region ball. With ``tr_norm="inf"`` the ball is folded into the
        bounds; with ``tr_norm=2`` it becomes a smooth inequality.
    """

    fun: Callable
    grad: Callable
    x0: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    eq: Optional[Callable] = None
    eq_jac: Optional[Callable] = None
    ineq: Optional[Callable] = None
    ineq_jac: Optional[Callable] = None
    tr_center: Optional[np.ndarray] = None
    tr_radius: Optional[float] = None
    tr_norm: object = "inf"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        n = self.x0.size
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)
        if self.eq is None:
            self.eq, self.eq_jac = _empty, lambda x: np.zeros((0, n))
        if self.ineq is None:
            self.ineq, self.ineq_jac = _empty, lambda x: np.zeros((0, n))
        if self.tr_norm not in ("inf", 2, np.inf):
            raise ValueError("tr_norm must be 'inf' or 2")
        if self.tr_norm == np.inf:
            self.tr_norm = "inf"

    @property
    def n(self):
        return self.x0.size

    def box(self):
        """Bounds intersected with the trust region when it is a box."""
        lb, ub = self.lb.copy(), self.ub.copy()
        if self.tr_radius is not None and self.tr_norm == "inf":
            c = np.asarray(self.tr_center, dtype=float)
            lb = np.maximum(lb, c - self.tr_radius)
            ub = np.minimum(ub, c + self.tr_radius)
            # Guard against a center sitting a hair outside its bounds.
            ub = np.maximum(ub, lb)
        return lb, ub

    def c_eq(self, x):
        return np.atleast_1d(np.asarray(self.eq(x), dtype=float))

    def j_eq(self, x):
        return np.asarray(self.eq_jac(x), dtype=float).reshape(-1, self.n)

    def c_in(self, x):
        c = np.atleast_1d(np.asarray(self.ineq(x), dtype=float))
        if self.tr_radius is not None and self.tr_norm == 2:
            d = x - self.tr_center
            c = np.append(c, d @ d - self.tr_radius**2)
        return c

    def j_in(self, x):
        J = np.asarray(self.ineq_jac(x), dtype=float).reshape(-1, self.n)
        if self.tr_radius is not None and self.tr_norm == 2:
            J = np.vstack([J, 2.0 * (x - self.tr_center)])
        return J


@dataclass
class NlpSolution:
    """Result of :func:`solve_nlp`.

    ``status`` is one of ``Solved``, ``Inexact`` (feasible, residuals above
    ``tol``), ``Infeasible``, ``MaxInner`` or ``NumericFailure``.
    """

    x: np.ndarray
    fun: float
    stationarity: float
    feasibility: float
    complementarity: float
    status: str
    multipliers: dict = field(default_factory=dict)
    iterations: int = 0
    message: str = ""

    @property
    def kkt_residual(self):
        return max(self.stationarity, self.feasibility, self.complementarity)

    @property
    def feasible(self):
        return self.status in (SOLVED, INEXACT, MAX_INNER) and self.feasibility <= FEAS_TOL


def primal_residual(spec, x):
    """Largest violation of equalities, inequalities and the box."""
    lb, ub = spec.box()
    parts = [0.0]
    ce = spec.c_eq(x)
    if ce.size:
        parts.append(np.max(np.abs(ce)))
    ci = spec.c_in(x)
    if ci.size:
        parts.append(np.max(ci))
    parts.append(np.max(lb - x, initial=0.0))
    parts.append(np.max(x - ub, initial=0.0))
    return float(max(parts))


def kkt_residuals(spec, x, active_tol=ACTIVE_TOL):
    """First-order residuals at ``x`` with least-squares multiplier estimates.

    Multipliers are recovered by a bounded least-squares fit of the
    Lagrangian gradient over the near-active constraints, which makes the
    residuals independent of the engine that produced ``x``.

    Returns
    -------
    tuple
        ``(stationarity, feasibility, complementarity, multipliers)``;
        stationarity is scaled by ``max(1, ||grad f||_inf)``.
    """
    lb, ub = spec.box()
    gf = np.asarray(spec.grad(x), dtype=float).reshape(-1)
    Je = spec.j_eq(x)
    ci = spec.c_in(x)
    Ji = spec.j_in(x)
    act_i = np.where(ci >= -active_tol * (1.0 + np.abs(ci)))[0]
    act_l = np.where(np.isfinite(lb) & (x - lb <= active_tol * (1.0 + np.abs(lb))))[0]
    act_u = np.where(np.isfinite(ub) & (ub - x <= active_tol * (1.0 + np.abs(ub))))[0]
    n = x.size
    cols = [Je.T, Ji[act_i].T]
    El = np.zeros((n, act_l.size))
    El[act_l, np.arange(act_l.size)] = -1.0
    Eu = np.zeros((n, act_u.size))
    Eu[act_u, np.arange(act_u.size)] = 1.0
    cols += [El, Eu]
    A = np.hstack(cols) if any(c.size for c in cols) else np.zeros((n, 0))
    m_e = Je.shape[0]
    lo = np.concatenate([np.full(m_e, -np.inf), np.zeros(A.shape[1] - m_e)])
    hi = np.full(A.shape[1], np.inf)
    if A.shape[1]:
        sol = lsq_linear(A, -gf, bounds=(lo, hi), method="bvls", tol=1e-14)
        mult = sol.x
        resid = A @ mult + gf
    else:
        mult = np.zeros(0)
        resid = gf
    scale = max(1.0, float(np.max(np.abs(gf), initial=0.0)))
    stat = float(np.max(np.abs(resid), initial=0.0)) / scale
    mu = np.zeros(ci.size)
    mu[act_i] = mult[m_e: m_e + act_i.size]
    comp = float(np.max(np.abs(mu * ci), initial=0.0))
    feas = primal_residual(spec, x)
    k = m_e + act_i.size
    nu_l = np.zeros(n)
    nu_l[act_l] = mult[k: k + act_l.size]
    nu_u = np.zeros(n)
    nu_u[act_u] = mult[k + act_l.size:]
    multipliers = {"eq": mult[:m_e].copy(), "ineq": mu, "lower": nu_l, "upper": nu_u}
    return stat, feas, comp, multipliers


# --------------------------------------------------------------------------
# engines: each maps (spec, x0, box, tol, max_inner) -> (x, iterations, message, hit_cap)


def _slsqp(spec, x0, lb, ub, tol, max_inner):
    cons = []
    if spec.c_eq(x0).size:
        cons.append({"type": "eq", "fun": spec.c_eq, "jac": spec.j_eq})
    if spec.c_in(x0).size:
        cons.append({"type": "ineq", "fun": lambda x: -spec.c_in(x), "jac": lambda x: -spec.j_in(x)})
    n_eq = spec.c_eq(x0).size
    n_free = int(np.sum(ub > lb))
    if n_eq > n_free:
        # SLSQP refuses overdetermined equality systems.
        return _auglag(spec, x0, lb, ub, tol, max_inner)
    bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with np.errstate(all="ignore"):
            res = minimize(
                spec.fun, x0, jac=spec.grad, method="SLSQP", bounds=bounds, constraints=cons,
                options={"maxiter": max_inner, "ftol": min(tol, 1e-10)},
            )
    x = np.clip(np.asarray(res.x, dtype=float), lb, ub)
    return x, int(res.nit), str(res.message), res.status == 9


def _auglag(spec, x0, lb, ub, tol, max_inner, max_outer=60):
    """Augmented Lagrangian with bound-constrained quasi-Newton inner solves.

    Inequalities receive nonnegative slacks so the inner problem only has
    bounds; the inner solver is L-BFGS-B.
    """
    n = x0.size
    m_e = spec.c_eq(x0).size
    m_i = spec.c_in(x0).size
    s0 = np.maximum(-spec.c_in(x0), 0.0)
    v = np.concatenate([x0, s0])
    vlb = np.concatenate([lb, np.zeros(m_i)])
    vub = np.concatenate([ub, np.full(m_i, np.inf)])
    lam = np.zeros(m_e + m_i)
    rho = 10.0

    def cons(v):
        x, s = v[:n], v[n:]
        return np.concatenate([spec.c_eq(x), spec.c_in(x) + s])

    def cjac(v):
        x = v[:n]
        top = np.hstack([spec.j_eq(x), np.zeros((m_e, m_i))])
        bot = np.hstack([spec.j_in(x), np.eye(m_i)])
        return np.vstack([top, bot])

    def lagr(v):
        c = cons(v)
        val = spec.fun(v[:n]) + lam @ c + 0.5 * rho * c @ c
        g = np.concatenate([spec.grad(v[:n]), np.zeros(m_i)]) + cjac(v).T @ (lam + rho * c)
        return val, g

    bounds = list(zip(np.where(np.isfinite(vlb), vlb, None), np.where(np.isfinite(vub), vub, None)))
    prev = np.inf
    total = 0
    msg = "outer iteration limit"
    for _ in range(max_outer):
        with np.errstate(all="ignore"):
            res = minimize(lagr, v, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": max_inner, "ftol": 1e-15, "gtol": tol * 1e-2})
        v = np.clip(res.x, vlb, vub)
        total += int(res.nit)
        c = cons(v)
        cn = float(np.max(np.abs(c), initial=0.0))
        lam = lam + rho * c
        if cn <= tol * 1e-2:
            g = res.jac
            if np.max(np.abs(np.where((v <= vlb) & (g > 0) | (v >= vub) & (g < 0), 0, g)), initial=0.0) <= tol:
                msg = "converged"
                break
        if cn > 0.25 * prev:
            rho = min(rho * 10.0, 1e12)
        prev = cn
    return v[:n], total, msg, total >= max_inner * max_outer


ENGINES = {"slsqp": _slsqp, "auglag": _auglag}


def register_engine(name, fn):
    """Add an engine ``fn(spec, x0, lb, ub, tol, max_inner) -> (x, nit, message, hit_cap)``."""
    ENGINES[name] = fn


#: Stationarity residual above which an engine's answer is cross-checked.
RETRY_STATIONARITY = 1e-1
#: Inner iteration cap of the fallback engine; it only has to rescue a stall.
FALLBACK_INNER = 100
FALLBACK_OUTER = 15


def solve_nlp(spec, tol=1e-8, max_inner=500, engine="slsqp"):
    """Solve ``spec`` to a local first-order point.

    If the start is feasible, the returned objective never exceeds the
    objective at the start: a worse or infeasible engine result is replaced
    by the starting point. When the chosen engine stops far from
    stationarity or infeasible, the augmented-Lagrangian engine is tried as
    well and the better of the two answers is kept.

    Returns
    -------
    NlpSolution
    """
    sol = _solve_with(spec, tol, max_inner, engine)
    if engine == "auglag" or _acceptable(sol):
        return sol
    # SLSQP's line search stalls on steep objectives; a rescaled retry is cheap.
    alt = _rescore(spec, _solve_with(_scaled(spec, 1e-3), tol, max_inner, engine), tol)
    if _better(alt, sol):
        sol = alt
    if _acceptable(sol):
        return sol
    logger.info("falling back to auglag (stationarity %.3g, %s)", sol.stationarity, sol.status)
    alt = _solve_with(spec, tol, min(max_inner, FALLBACK_INNER), _rescue)
    if _better(alt, sol):
        logger.debug("auglag improved on %s: %s -> %s", engine, sol.fun, alt.fun)
        sol = alt
    return sol


def _acceptable(sol):
    return sol.status not in (INFEASIBLE, NUMERIC_FAILURE) and sol.stationarity <= RETRY_STATIONARITY


def _scaled(spec, c):
    fun, grad = spec.fun, spec.grad
    return dataclasses.replace(spec, fun=lambda v: c * fun(v), grad=lambda v: c * np.asarray(grad(v)))


def _rescore(spec, sol, tol):
    """Re-evaluate ``sol`` against the unscaled ``spec``."""
    if sol.status == NUMERIC_FAILURE:
        return sol
    stat, feas, comp, mult = kkt_residuals(spec, sol.x)
    if feas > FEAS_TOL:
        status = INFEASIBLE
    elif max(stat, feas, comp) <= tol:
        status = SOLVED
    else:
        status = sol.status if sol.status == MAX_INNER else INEXACT
    return dataclasses.replace(sol, fun=float(spec.fun(sol.x)), stationarity=stat, feasibility=feas,
                               complementarity=comp, status=status, multipliers=mult)


def _better(a, b):
    """True if ``a`` is a strictly preferable answer to ``b``."""
    fa, fb = a.feasibility <= FEAS_TOL, b.feasibility <= FEAS_TOL
    if fa != fb:
        return fa
    if not fa:
        return a.feasibility < b.feasibility
    return a.fun < b.fun - 1e-12 * (1.0 + abs(b.fun))


def _rescue(spec, x0, lb, ub, tol, max_inner):
    return _auglag(spec, x0, lb, ub, tol, max_inner, max_outer=FALLBACK_OUTER)


def _onto_ball(spec, x, lb, ub):
    """Pull a point that overshoots a Euclidean trust region back onto its surface."""
    if spec.tr_radius is None or spec.tr_norm != 2:
        return x
    c = np.asarray(spec.tr_center, dtype=float)
    dist = float(np.linalg.norm(x - c))
    if dist <= spec.tr_radius:
        return x
    return np.clip(c + (spec.tr_radius / dist) * (x - c), lb, ub)


def _solve_with(spec, tol, max_inner, engine):
    lb, ub = spec.box()
    x0 = np.clip(spec.x0, lb, ub)
    try:
        f_start = float(spec.fun(x0))
        feas_start = primal_residual(spec, x0)
    except (ArithmeticError, ValueError):
        f_start, feas_start = np.inf, np.inf
    try:
        fn = engine if callable(engine) else ENGINES[engine]
        x, nit, msg, hit_cap = fn(spec, x0, lb, ub, tol, max_inner)
        x = _onto_ball(spec, x, lb, ub)
        fx = float(spec.fun(x))
        if not (np.all(np.isfinite(x)) and np.isfinite(fx)):
            raise FloatingPointError("non-finite iterate")
        stat, feas, comp, mult = kkt_residuals(spec, x)
    except (FloatingPointError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        logger.debug("NLP engine failed: %s", exc)
        if np.isfinite(f_start) and feas_start <= FEAS_TOL:
            stat, feas, comp, mult = kkt_residuals(spec, x0)
            return NlpSolution(x0, f_start, stat, feas, comp, INEXACT, mult, 0, f"engine failed: {exc}")
        return NlpSolution(x0, f_start, np.inf, feas_start, np.inf, NUMERIC_FAILURE, {}, 0, str(exc))

    fscale = 1e-12 * (1.0 + abs(f_start)) if np.isfinite(f_start) else 0.0
    if feas_start <= FEAS_TOL and (feas > FEAS_TOL or fx > f_start + fscale):
        stat, feas, comp, mult = kkt_residuals(spec, x0)
        status = SOLVED if max(stat, feas, comp) <= tol else INEXACT
        return NlpSolution(x0, f_start, stat, feas, comp, status, mult, nit, "kept feasible start")

    if feas > FEAS_TOL:
        status = INFEASIBLE
    elif max(stat, feas, comp) <= tol:
        status = SOLVED
    elif hit_cap:
        status = MAX_INNER
    else:
        status = INEXACT
    return NlpSolution(x, fx, stat, feas, comp, status, mult, nit, msg)
