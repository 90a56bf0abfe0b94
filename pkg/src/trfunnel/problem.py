"""Grey-box problem abstraction, point partitioning, and evaluation accounting.

A grey-box problem has decision vector ``x = [w, y, z]``. The glass-box part
(objective ``f``, equalities ``h(x) = 0`` and inequalities ``g(x) <= 0``) is
fully known with first derivatives. The black box ``t(w)`` links the outputs
``y`` to the inputs ``w`` and can only be evaluated.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BoundsViolation, NonFiniteValue

logger = logging.getLogger(__name__)

#: Relative step of the central finite-difference fallback.
FD_STEP = 1e-6


def _empty_constraint(x):
    return np.zeros(0)


def fd_gradient(fun, x, step=FD_STEP):
    """Central finite-difference derivative of ``fun`` at ``x``.

    Parameters
    ----------
    fun : callable
        Scalar or vector valued function of a 1-D array.
    x : ndarray
        Evaluation point.
    step : float
        Relative step; coordinate ``i`` uses ``step * (1 + |x_i|)``.

    Returns
    -------
    ndarray
        Gradient of shape ``(n,)`` for a scalar ``fun``, Jacobian of shape
        ``(m, n)`` otherwise.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    cols = []
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(fun(xp), dtype=float) - np.asarray(fun(xm), dtype=float)) / (2 * h))
    if f0.ndim == 0:
        return np.array(cols, dtype=float).reshape(x.size)
    if not cols:
        return np.zeros((f0.size, 0))
    return np.stack(cols, axis=-1).reshape(f0.size, x.size)


@dataclass
class GreyBoxProblem:
    """A constrained grey-box optimisation problem.

    Parameters
    ----------
    name : str
        Identifier used in reports.
    n_w, n_y, n_z : int
        Sizes of the black-box inputs, black-box outputs and pure glass-box
        variables. ``x`` is laid out as ``[w, y, z]``.
    objective : callable
        ``f(x) -> float``.
    black_box : callable
        ``t(w) -> ndarray`` of length ``n_y``.
    lb, ub : array_like
        Bounds on every component of ``x``. Infinite entries are allowed
        except on the ``w`` block.
    objective_grad : callable, optional
        ``grad f(x)``; central differences are used when omitted.
    eq_constraints, eq_jacobian : callable, optional
        ``h(x)`` and its Jacobian.
    ineq_constraints, ineq_jacobian : callable, optional
        ``g(x)`` (feasible when ``<= 0``) and its Jacobian.
    x0 : array_like, optional
        Default starting point.
    """

    name: str
    n_w: int
    n_y: int
    n_z: int
    objective: Callable
    black_box: Callable
    lb: np.ndarray
    ub: np.ndarray
    objective_grad: Optional[Callable] = None
    eq_constraints: Optional[Callable] = None
    eq_jacobian: Optional[Callable] = None
    ineq_constraints: Optional[Callable] = None
    ineq_jacobian: Optional[Callable] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.n
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)
        if self.lb.size != n or self.ub.size != n:
            raise ValueError(f"bounds must have length {n}")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.lb[: self.n_w])) and np.all(np.isfinite(self.ub[: self.n_w]))):
            raise ValueError("bounds on the black-box inputs w must be finite")
        if self.eq_constraints is None:
            self.eq_constraints = _empty_constraint
        if self.ineq_constraints is None:
            self.ineq_constraints = _empty_constraint
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float).reshape(n)
        probe = self.x0 if self.x0 is not None else self.default_point()
        self.n_eq = int(np.asarray(self.eq_constraints(probe)).size)
        self.n_ineq = int(np.asarray(self.ineq_constraints(probe)).size)

    # -- partition ---------------------------------------------------------
    @property
    def n(self):
        """Total number of variables."""
        return self.n_w + self.n_y + self.n_z

    @property
    def w_slice(self):
        return slice(0, self.n_w)

    @property
    def y_slice(self):
        return slice(self.n_w, self.n_w + self.n_y)

    @property
    def z_slice(self):
        return slice(self.n_w + self.n_y, self.n)

    @property
    def w_bounds(self):
        return self.lb[self.w_slice], self.ub[self.w_slice]

    def split(self, x):
        """Return ``(w, y, z)`` copies of the blocks of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.size != self.n:
            raise ValueError(f"expected a vector of length {self.n}, got {x.size}")
        return x[self.w_slice].copy(), x[self.y_slice].copy(), x[self.z_slice].copy()

    def assemble(self, w, y, z):
        """Concatenate blocks into a full decision vector."""
        parts = [np.asarray(p, dtype=float).reshape(-1) for p in (w, y, z)]
        if (parts[0].size, parts[1].size, parts[2].size) != (self.n_w, self.n_y, self.n_z):
            raise ValueError("block sizes do not match the problem partition")
        return np.concatenate(parts)

    def default_point(self):
        """Box midpoint, with ``y`` set to 1 and infinite bounds handled by clipping."""
        finite = np.isfinite(self.lb) & np.isfinite(self.ub)
        mid = np.zeros(self.n)
        mid[finite] = 0.5 * (self.lb[finite] + self.ub[finite])
        mid[self.y_slice] = 1.0
        return np.clip(mid, self.lb, self.ub)

    # -- glass-box derivatives with a finite-difference fallback ----------
    def grad_f(self, x):
        if self.objective_grad is not None:
            return np.asarray(self.objective_grad(x), dtype=float).reshape(self.n)
        return fd_gradient(self.objective, x)

    def jac_h(self, x):
        if self.n_eq == 0:
            return np.zeros((0, self.n))
        if self.eq_jacobian is not None:
            return np.asarray(self.eq_jacobian(x), dtype=float).reshape(self.n_eq, self.n)
        return fd_gradient(self.eq_constraints, x)

    def jac_g(self, x):
        if self.n_ineq == 0:
            return np.zeros((0, self.n))
        if self.ineq_jacobian is not None:
            return np.asarray(self.ineq_jacobian(x), dtype=float).reshape(self.n_ineq, self.n)
        return fd_gradient(self.ineq_constraints, x)

    def h(self, x):
        return np.asarray(self.eq_constraints(x), dtype=float).reshape(self.n_eq)

    def g(self, x):
        return np.asarray(self.ineq_constraints(x), dtype=float).reshape(self.n_ineq)

    def f(self, x):
        return float(self.objective(x))


@dataclass
class Point:
    """Partitioned decision vector."""

    w: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @classmethod
    def from_vector(cls, problem, x):
        return cls(*problem.split(x))

    def to_vector(self, problem):
        return problem.assemble(self.w, self.y, self.z)


@dataclass
class EvaluationLedger:
    """Counts function evaluations.

    ``black_box_calls`` is the number of actual ``t(w)`` invocations;
    ``by_purpose`` splits that count by the reason for the call (sampling,
    validation, theta, restoration, ...).
    """

    black_box_calls: int = 0
    glass_box_calls: int = 0
    wall_time_s: float = 0.0
    by_purpose: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self._lock = threading.Lock()

    def charge_black_box(self, purpose, seconds=0.0):
        with self._lock:
            self.black_box_calls += 1
            self.by_purpose[purpose] += 1
            self.wall_time_s += seconds

    def charge_glass_box(self, n=1):
        with self._lock:
            self.glass_box_calls += n


@dataclass
class GlassBoxEval:
    """Values and first derivatives of the glass-box functions at one point."""

    f: float
    h: np.ndarray
    g: np.ndarray
    grad_f: np.ndarray
    jac_h: np.ndarray
    jac_g: np.ndarray


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue(f"{name} produced a non-finite value")


def evaluate_glass_box(problem, x, ledger=None):
    """Evaluate ``f``, ``h``, ``g`` and their derivatives at ``x``.

    Raises
    ------
    NonFiniteValue
        If any value or derivative is NaN or infinite.
    """
    if isinstance(x, Point):
        x = x.to_vector(problem)
    x = np.asarray(x, dtype=float)
    if x.size != problem.n:
        raise ValueError(f"expected a vector of length {problem.n}, got {x.size}")
    with np.errstate(all="ignore"):
        try:
            out = GlassBoxEval(
                f=problem.f(x),
                h=problem.h(x),
                g=problem.g(x),
                grad_f=problem.grad_f(x),
                jac_h=problem.jac_h(x),
                jac_g=problem.jac_g(x),
            )
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise NonFiniteValue(f"glass-box evaluation failed: {exc}") from exc
    _check_finite("glass-box evaluation", out.f, out.h, out.g, out.grad_f, out.jac_h, out.jac_g)
    if ledger is not None:
        ledger.charge_glass_box()
    return out


def evaluate_black_box(problem, w, ledger, purpose="direct", bound_tol=1e-9):
    """Evaluate ``t(w)`` once and charge the ledger.

    Raises
    ------
    BoundsViolation
        If ``w`` lies outside its box by more than ``bound_tol`` (relative).
    NonFiniteValue
        If the black box returns NaN or Inf.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != problem.n_w:
        raise ValueError(f"expected w of length {problem.n_w}, got {w.size}")
    lo, hi = problem.w_bounds
    slack = bound_tol * (1.0 + np.abs(lo) + np.abs(hi))
    if np.any(w < lo - slack) or np.any(w > hi + slack):
        raise BoundsViolation(f"black-box input outside its box: {w}")
    t0 = time.perf_counter()
    with np.errstate(all="ignore"):
        out = np.asarray(problem.black_box(np.clip(w, lo, hi)), dtype=float).reshape(-1)
    ledger.charge_black_box(purpose, time.perf_counter() - t0)
    if out.size != problem.n_y:
        raise ValueError(f"black box returned {out.size} outputs, expected {problem.n_y}")
    _check_finite("black box", out)
    return out


class BlackBoxOracle:
    """Memoised black-box access for one solver run.

    Values are keyed on the exact bytes of ``w``. The memo is flushed with
    :meth:`move_to` whenever the iterate changes, keeping only the value at
    the new center.
    """

    def __init__(self, problem, ledger=None):
        self.problem = problem
        self.ledger = ledger if ledger is not None else EvaluationLedger()
        self._memo = {}

    def __call__(self, w, purpose="direct"):
        w = np.asarray(w, dtype=float).reshape(-1)
        key = w.tobytes()
        hit = self._memo.get(key)
        if hit is not None:
            return hit.copy()
        val = evaluate_black_box(self.problem, w, self.ledger, purpose)
        self._memo[key] = val
        return val.copy()

    def cached(self, w):
        return np.asarray(w, dtype=float).reshape(-1).tobytes() in self._memo

    def move_to(self, w_center):
        key = np.asarray(w_center, dtype=float).reshape(-1).tobytes()
        keep = self._memo.get(key)
        self._memo = {} if keep is None else {key: keep}


def infeasibility(rm, problem, x, ledger_or_oracle):
    """Mismatch ``||r(w) - t(w)||`` between the reduced model and the black box.

    Parameters
    ----------
    rm : ReducedModel
        Surrogate of ``t``.
    problem : GreyBoxProblem
    x : ndarray or Point
        Point whose ``w`` block is used.
    ledger_or_oracle : EvaluationLedger or BlackBoxOracle
        A plain ledger always triggers a black-box call; an oracle reuses a
        memoised value when available.
    """
    if isinstance(x, Point):
        w = x.w
    else:
        w = problem.split(x)[0]
    if isinstance(ledger_or_oracle, BlackBoxOracle):
        t = ledger_or_oracle(w, "theta")
    else:
        t = evaluate_black_box(problem, w, ledger_or_oracle, "theta")
    return float(np.linalg.norm(rm.predict(w) - t))


def output_mismatch(problem, x, oracle, purpose="theta"):
    """``||y - t(w)||`` at a full point; the bookkept infeasibility of an iterate."""
    w, y, _ = problem.split(x)
    return float(np.linalg.norm(y - oracle(w, purpose)))
