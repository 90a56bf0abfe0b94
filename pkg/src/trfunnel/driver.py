"""Outer trust-region loop with funnel or filter globalisation.

Each outer iteration (re)builds a fully-linear reduced model around the
current ``w``, measures criticality, secures a compatible subproblem (via
restoration if needed), solves the trust-region subproblem, and classifies
the trial point. Every iteration and every restoration pass emits one
:class:`TraceRecord`.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateGeometry, RestorationFailed, SingularFit
from .filter import FilterSet, classify_filter_step, filter_acceptable, filter_augment
from .funnel import (
    StepKind,
    classify_step,
    init_funnel,
    reduction_ratio,
    update_funnel,
    update_tr_f_type,
    update_tr_rejected,
    update_tr_theta_type,
)
from .models import FullyLinearParams, RMForm, fit_at, verify_fully_linear
from .nlp import (
    INFEASIBLE,
    NUMERIC_FAILURE,
    compatibility_step,
    criticality_measure,
    project_glass_feasible,
    restoration_step,
    solve_trsp,
)
from .params import AlgorithmParams
from .problem import BlackBoxOracle, EvaluationLedger, output_mismatch

logger = logging.getLogger(__name__)

CRITICAL_POINT = "CriticalPoint"
SLOW_PROGRESS = "SlowProgress"
RESTORATION_FAILED = "RestorationFailed"
BUDGET_EXHAUSTED = "BudgetExhausted"

RESTORATION = "restoration"
MAX_REBUILDS = 5

TRACE_FIELDS = (
    "k", "step_type", "f", "theta", "chi", "Delta", "sigma", "phi", "step_norm",
    "f_trial", "theta_trial", "rho", "bb_evals_cumulative", "wall_s",
)


@dataclass
class TraceRecord:
    """Diagnostics of one outer iteration or restoration pass.

    ``f``, ``theta``, ``chi``, ``Delta``, ``sigma`` and ``phi`` describe the
    iterate when the decision was taken; ``f_trial``, ``theta_trial`` and
    ``rho`` describe the trial point. ``phi`` is ``None`` under the filter.
    """

    k: int
    step_type: str
    f: float
    theta: float
    chi: float
    Delta: float
    sigma: float
    phi: Optional[float]
    step_norm: float
    f_trial: float
    theta_trial: float
    rho: float
    bb_evals_cumulative: int
    wall_s: float

    def as_row(self):
        return [getattr(self, name) for name in TRACE_FIELDS]


@dataclass
class SolverOptions:
    """Run settings of :func:`run` besides the problem itself."""

    rm_form: str = "taylor"
    strategy: str = "funnel"
    params: AlgorithmParams = field(default_factory=AlgorithmParams)
    seed: int = 0
    x0: Optional[np.ndarray] = None
    engine: str = "slsqp"
    record_timing: bool = False
    trace_callback: Optional[Callable] = None

    def __post_init__(self):
        self.rm_form = RMForm.parse(self.rm_form).value
        if self.strategy not in ("funnel", "filter"):
            raise ValueError(f"strategy must be 'funnel' or 'filter', got {self.strategy!r}")


@dataclass
class IterateState:
    """Mutable state of one solver run."""

    k: int
    x: np.ndarray
    Delta: float
    sigma: float
    theta: float
    f: float
    chi: float = math.nan
    rm: object = None
    ledger: EvaluationLedger = field(default_factory=EvaluationLedger)


@dataclass
class SolverReport:
    """Outcome of :func:`run` with per-iteration trace."""

    status: str
    x: np.ndarray
    f: float
    theta: float
    chi: float
    iterations: int
    counts: dict
    black_box_evals: int
    wall_time_s: float
    sigma: float = math.nan
    Delta: float = math.nan
    problem: str = ""
    rm_form: str = ""
    strategy: str = ""
    seed: int = 0
    params: dict = field(default_factory=dict)
    evals_by_purpose: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def final_objective(self):
        return self.f

    def to_dict(self, include_trace=False):
        d = asdict(self)
        d["x"] = [float(v) for v in self.x]
        d["final_objective"] = self.f
        if not include_trace:
            d.pop("trace")
        else:
            d["trace"] = [asdict(r) for r in self.trace]
        return d


# --------------------------------------------------------------------------
# globalisation strategies


class FunnelGlobalizer:
    name = "funnel"

    def __init__(self, theta0, params):
        self.params = params
        self.state = init_funnel(theta0, params)

    @property
    def phi(self):
        return self.state.phi

    def admissible(self, f_k, theta_k, f_t, theta_t):
        return theta_t <= self.state.phi

    def classify(self, f_k, f_t, theta_k, theta_t, Delta):
        return classify_step(f_k, f_t, theta_k, theta_t, self.state.phi, Delta, self.params)

    def on_theta_step(self, f_k, theta_k, f_t, theta_t):
        self.state = update_funnel(self.state, theta_t, self.params.kappa_f)


class FilterGlobalizer:
    """Filter acceptance.

    Outer steps must clear the filter and the envelope of the current
    iterate; restoration passes only the filter. Starts with a single entry
    ``(-inf, theta_max)`` bounding the infeasibility, and is augmented with
    the departing iterate on every theta-type step.
    """

    name = "filter"

    def __init__(self, theta0, params):
        self.params = params
        theta_max = max(params.phi_min, params.kappa_phi * theta0)
        self.filter = FilterSet([(-math.inf, theta_max)], params.gamma_theta, params.gamma_f)

    phi = None

    def admissible(self, f_k, theta_k, f_t, theta_t):
        # Restoration only needs to satisfy the filter itself; the envelope
        # around the current iterate would block every pass once its margin
        # exceeds the decrease one pass can deliver.
        return filter_acceptable(self.filter, f_t, theta_t)

    def classify(self, f_k, f_t, theta_k, theta_t, Delta):
        return classify_filter_step(self.filter, f_k, f_t, theta_k, theta_t, Delta, self.params)

    def on_theta_step(self, f_k, theta_k, f_t, theta_t):
        self.filter = filter_augment(self.filter, f_k, theta_k)


def make_globalizer(strategy, theta0, params):
    return (FunnelGlobalizer if strategy == "funnel" else FilterGlobalizer)(theta0, params)


# --------------------------------------------------------------------------
# small pure pieces


def check_termination(state, params, history):
    """Return a terminal status or ``None`` to continue.

    ``history`` holds the ``(theta, Delta)`` pairs of the latest iterations,
    newest last.
    """
    if state.theta <= params.eps_theta and state.chi <= params.eps_chi and state.sigma <= params.eps_Delta:
        return CRITICAL_POINT
    recent = list(history)[-2:]
    if len(recent) == 2 and all(th <= params.eps_theta and D <= params.Delta_min for th, D in recent):
        return SLOW_PROGRESS
    if state.k >= params.max_iter or state.ledger.black_box_calls >= params.max_bb_evals:
        return BUDGET_EXHAUSTED
    return None


def criticality_update(sigma_prev, chi, xi, Delta_min):
    """Shrink the sampling radius towards ``chi / xi``, never below ``Delta_min``."""
    return max(min(sigma_prev, chi / xi), Delta_min)


def inf_norm(v):
    return float(np.max(np.abs(v), initial=0.0))


class _Budget(Exception):
    pass


# --------------------------------------------------------------------------
# the solver


class _Run:
    def __init__(self, problem, opts):
        self.problem = problem
        self.opts = opts
        self.p = opts.params
        self.fl = FullyLinearParams(self.p.kappa_g, self.p.kappa_h, int(self.p.n_validation))
        self.ledger = EvaluationLedger()
        self.oracle = BlackBoxOracle(problem, self.ledger)
        self.trace = []
        self.counts = {"f": 0, "theta": 0, "rejected": 0, RESTORATION: 0}
        self.t0 = time.perf_counter()
        self.rebuild_failures = 0
        self.certified_sigma = math.inf

    # -- helpers -----------------------------------------------------------
    def w(self, x):
        return x[self.problem.w_slice]

    def t_center(self):
        return self.oracle(self.w(self.st.x), "theta")

    def center_mismatch(self):
        w = self.w(self.st.x)
        return float(np.linalg.norm(self.t_center() - self.st.rm.predict(w)))

    def record(self, step_type, step_norm, f_t, theta_t, rho):
        st = self.st
        rec = TraceRecord(
            k=st.k, step_type=step_type, f=st.f, theta=st.theta, chi=st.chi, Delta=st.Delta,
            sigma=st.sigma, phi=self.glob.phi, step_norm=step_norm, f_trial=f_t, theta_trial=theta_t,
            rho=rho, bb_evals_cumulative=self.ledger.black_box_calls,
            wall_s=(time.perf_counter() - self.t0) if self.opts.record_timing else 0.0,
        )
        self.trace.append(rec)
        self.counts[step_type] += 1
        if self.opts.trace_callback is not None:
            self.opts.trace_callback(rec)
        st.k += 1

    def move(self, x_new, f_new, theta_new):
        st = self.st
        st.x = np.array(x_new, dtype=float)
        st.f = float(f_new)
        st.theta = float(theta_new)
        self.oracle.move_to(self.w(st.x))

    # -- reduced model -----------------------------------------------------
    def ensure_rm(self):
        st = self.st
        w = self.w(st.x)
        rm = st.rm
        if rm is not None and np.array_equal(rm.center, w):
            if st.sigma >= self.certified_sigma:
                return
            rng = np.random.default_rng([self.opts.seed, st.k, 99])
            if verify_fully_linear(rm, self.problem, st.sigma, self.fl, self.oracle, rng).passed:
                self.certified_sigma = st.sigma
                return
        self.rebuild()

    def rebuild(self):
        st = self.st
        w = self.w(st.x)
        sigma = st.sigma
        best = None
        for attempt in range(MAX_REBUILDS):
            if attempt >= 2:
                sigma = max(0.5 * sigma, self.p.Delta_min)
            seed = [self.opts.seed, st.k, attempt]
            try:
                rm = fit_at(self.problem, self.opts.rm_form, w, sigma, self.oracle, seed)
            except (DegenerateGeometry, SingularFit) as exc:
                logger.debug("model fit failed (attempt %d): %s", attempt, exc)
                continue
            best = rm
            st.sigma = sigma
            rng = np.random.default_rng([self.opts.seed, st.k, attempt, 1])
            if verify_fully_linear(rm, self.problem, sigma, self.fl, self.oracle, rng).passed:
                st.rm = rm
                self.certified_sigma = sigma
                return
        if best is None:
            raise DegenerateGeometry(f"could not fit a {self.opts.rm_form} model at w = {w}")
        self.rebuild_failures += 1
        logger.debug("fully-linear check failed after %d attempts; using last model", MAX_REBUILDS)
        st.rm = best
        self.certified_sigma = best.sigma

    # -- restoration -------------------------------------------------------
    def compat(self):
        st = self.st
        return compatibility_step(self.problem, st.rm, st.x, st.Delta, self.p, self.opts.engine, self.p.nlp_tol)

    def restoration(self, d, alpha, budget):
        """Loop restoration passes until compatible; returns the final ``(d, alpha)``."""
        st, p = self.st, self.p
        passes = 0
        while alpha > p.eps_comp:
            if passes >= budget:
                raise RestorationFailed(f"no compatible subproblem after {passes} restoration passes (alpha = {alpha:.3g})")
            if st.k >= p.max_iter or self.ledger.black_box_calls >= p.max_bb_evals:
                raise _Budget
            passes += 1
            xr, _, _ = restoration_step(self.problem, st.rm, st.x, st.Delta, self.opts.engine, p.nlp_tol)
            step_norm = inf_norm(xr - st.x)
            theta_r = output_mismatch(self.problem, xr, self.oracle, "restoration")
            f_r = self.problem.f(xr)
            rho = reduction_ratio(st.theta, theta_r, self.center_mismatch(), p.eps_theta)
            accept = theta_r < st.theta and self.glob.admissible(st.f, st.theta, f_r, theta_r)
            self.record(RESTORATION, step_norm, f_r, theta_r, rho)
            st.Delta = restoration_radius(accept, rho, step_norm, st.Delta, p)
            if accept:
                self.move(xr, f_r, theta_r)
            st.sigma = min(st.sigma, p.Psi * st.Delta)
            self.ensure_rm()
            d, alpha, _ = self.compat()
        return d, alpha

    # -- main loop ---------------------------------------------------------
    def solve(self):
        problem, p, opts = self.problem, self.p, self.opts
        x0 = opts.x0 if opts.x0 is not None else (problem.x0 if problem.x0 is not None else problem.default_point())
        x0 = np.clip(np.asarray(x0, dtype=float), problem.lb, problem.ub)
        x_start, _ = project_glass_feasible(problem, x0, opts.engine)
        theta0 = output_mismatch(problem, x_start, self.oracle, "theta")
        self.st = IterateState(
            k=0, x=x_start, Delta=p.Delta_0, sigma=min(p.sigma_0, p.Delta_0),
            theta=theta0, f=problem.f(x_start), ledger=self.ledger,
        )
        self.oracle.move_to(self.w(x_start))
        self.glob = make_globalizer(opts.strategy, theta0, p)
        history = deque(maxlen=2)
        st = self.st
        status = None
        while status is None:
            if st.k >= p.max_iter or self.ledger.black_box_calls >= p.max_bb_evals:
                status = BUDGET_EXHAUSTED
                break
            self.ensure_rm()
            st.chi = criticality_measure(problem, st.rm, st.x, self.ledger)
            history.append((st.theta, st.Delta))
            status = check_termination(st, p, history)
            if status is not None:
                break
            if st.chi < p.xi * st.sigma:
                st.sigma = criticality_update(st.sigma, st.chi, p.xi, p.Delta_min)
            d, alpha, _ = self.compat()
            if alpha > p.eps_comp:
                try:
                    self.restoration(d, alpha, int(p.restoration_budget))
                except RestorationFailed as exc:
                    logger.info("%s", exc)
                    status = RESTORATION_FAILED
                except _Budget:
                    status = BUDGET_EXHAUSTED
                continue
            self.step(d)
        return self.report(status)

    def step(self, d):
        problem, p, st = self.problem, self.p, self.st
        s, xs, fs, sol = solve_trsp(problem, st.rm, st.x, d, st.Delta, self.ledger, self.opts.engine, p.nlp_tol)
        if sol.status in (INFEASIBLE, NUMERIC_FAILURE):
            logger.debug("TRSP %s; falling back to the compatibility point", sol.status)
            xs = st.x + d
            s, fs = d, problem.f(xs)
        step_norm = inf_norm(s)
        theta_t = output_mismatch(problem, xs, self.oracle, "theta")
        rho = reduction_ratio(st.theta, theta_t, self.center_mismatch(), p.eps_theta)
        decision = self.glob.classify(st.f, fs, st.theta, theta_t, st.Delta)
        kind = decision.kind
        f_k, theta_k, Delta_k = st.f, st.theta, st.Delta
        self.record(kind.value, step_norm, fs, theta_t, rho)
        if kind is StepKind.FTYPE:
            st.Delta = max(p.Delta_min, update_tr_f_type(step_norm, Delta_k, p.gamma_e))
            self.move(xs, fs, theta_t)
        elif kind is StepKind.THETATYPE:
            self.glob.on_theta_step(f_k, theta_k, fs, theta_t)
            st.Delta = max(p.Delta_min, update_tr_theta_type(rho, step_norm, Delta_k, p))
            st.sigma = min(st.sigma, p.Psi * st.Delta)
            self.move(xs, fs, theta_t)
        else:
            st.Delta = max(p.Delta_min, update_tr_rejected(step_norm, p))
            st.sigma = min(st.sigma, p.Psi * st.Delta)

    def report(self, status):
        st = self.st
        return SolverReport(
            status=status, x=st.x.copy(), f=st.f, theta=st.theta, chi=st.chi,
            sigma=st.sigma, Delta=st.Delta, iterations=len(self.trace), counts=dict(self.counts),
            black_box_evals=self.ledger.black_box_calls,
            wall_time_s=time.perf_counter() - self.t0,
            problem=self.problem.name, rm_form=self.opts.rm_form, strategy=self.opts.strategy,
            seed=self.opts.seed, params=self.p.to_dict(),
            evals_by_purpose=dict(self.ledger.by_purpose), trace=self.trace,
        )


def restoration_radius(accepted, rho, step_norm, Delta, params):
    """Radius after a restoration pass."""
    if not accepted or rho < params.eta_1:
        return max(params.Delta_min, params.gamma_c * Delta)
    if rho >= params.eta_2:
        return max(params.gamma_e * step_norm, Delta)
    return Delta


def run(problem, config=None, **overrides):
    """Solve ``problem`` and return a :class:`SolverReport`.

    Parameters
    ----------
    problem : GreyBoxProblem
    config : SolverOptions or RunConfig, optional
        Anything with a ``to_options()`` method is converted first.
    **overrides
        Field overrides applied to the options (``rm_form``, ``strategy``,
        ``params``, ``seed``, ``x0``, ...).

    Notes
    -----
    Terminal conditions are reported in ``SolverReport.status``; restoration
    failure and budget exhaustion never raise.
    """
    if config is None:
        opts = SolverOptions(**overrides)
    else:
        opts = config.to_options() if hasattr(config, "to_options") else config
        if overrides:
            opts = SolverOptions(**{**asdict_shallow(opts), **overrides})
    return _Run(problem, opts).solve()


def asdict_shallow(opts):
    return {f: getattr(opts, f) for f in SolverOptions.__dataclass_fields__}
