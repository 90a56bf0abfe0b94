"""Local reduced models ``r(w)`` of the black box ``t(w)``.

Five forms are available, addressed by name:

``linear``, ``quadratic``, ``simple_quadratic``
    Polynomial least-squares fits in scaled coordinates ``u = (w - c) / sigma``.
``gp``
    Noise-free kriging with a squared-exponential kernel (length scale
    ``sigma``) on top of a linear trend.
``taylor``
    First-order expansion ``t(c) + J (w - c)`` with ``J`` from central
    differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels as K
from .errors import DegenerateGeometry, SingularFit
from .problem import BlackBoxOracle, EvaluationLedger

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
GP_JITTER = 1e-10


class RMForm(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    SIMPLE_QUADRATIC = "simple_quadratic"
    GP = "gp"
    TAYLOR = "taylor"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown reduced-model form {value!r}; expected one of {names}") from None


RM_FORMS = tuple(m.value for m in RMForm)

_POLY_CODE = {
    RMForm.LINEAR: K.LINEAR,
    RMForm.QUADRATIC: K.QUADRATIC,
    RMForm.SIMPLE_QUADRATIC: K.SIMPLE_QUADRATIC,
}


@dataclass(frozen=True)
class FullyLinearParams:
    """Constants of the fully-linear certification."""

    kappa_g: float = 10.0
    kappa_h: float = 10.0
    n_validation: int = 2

    def __post_init__(self):
        if not (self.kappa_g > 0 and self.kappa_h > 0):
            raise ValueError("kappa_g and kappa_h must be positive")
        if self.n_validation < 1:
            raise ValueError("n_validation must be at least 1")


def design_size(form, n_w):
    """Number of design points used for ``form`` in ``n_w`` dimensions."""
    form = RMForm.parse(form)
    if form is RMForm.LINEAR:
        return n_w + 1
    if form is RMForm.QUADRATIC:
        return (n_w + 1) * (n_w + 2) // 2
    # Taylor uses the central-difference stencil: center plus +/- steps.
    return 2 * n_w + 1


def taylor_step(sigma):
    return max(1e-6, 1e-2 * sigma)


def _sampling_box(center, sigma, lb, ub):
    lo = center - sigma
    hi = center + sigma
    if lb is not None:
        lo = np.maximum(lo, lb)
    if ub is not None:
        hi = np.minimum(hi, ub)
    return lo, hi


def sample_design(center, sigma, form, seed, lb=None, ub=None):
    """Design points for fitting a reduced model.

    The center is always the first point. Taylor designs are the
    deterministic difference stencil. Other forms draw uniformly from the
    infinity-norm ball of radius ``sigma`` intersected with ``[lb, ub]``.

    Parameters
    ----------
    center : ndarray
        Ball center, inside the bounds.
    sigma : float
        Sampling radius, positive.
    form : str or RMForm
    seed : int or sequence of int
        Seed for :func:`numpy.random.default_rng`.
    lb, ub : ndarray, optional
        Box on ``w``.

    Returns
    -------
    ndarray
        Design matrix of shape ``(p, n_w)``.

    Raises
    ------
    DegenerateGeometry
        If the clipped ball is flat in some coordinate or the draw is
        rank-deficient for the requested form.
    """
    form = RMForm.parse(form)
    center = np.asarray(center, dtype=float).reshape(-1)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    n = center.size
    lo, hi = _sampling_box(center, sigma, lb, ub)
    if np.any(hi - lo <= 0):
        raise DegenerateGeometry("sampling box has zero width in some coordinate")

    if form is RMForm.TAYLOR:
        h = taylor_step(sigma)
        pts = [center.copy()]
        for i in range(n):
            for sgn in (1.0, -1.0):
                p = center.copy()
                p[i] = np.clip(center[i] + sgn * h, lo[i], hi[i])
                pts.append(p)
        S = np.array(pts)
        for i in range(n):
            if S[1 + 2 * i, i] == S[2 + 2 * i, i]:
                raise DegenerateGeometry(f"difference stencil collapsed in coordinate {i}")
        return S

    rng = np.random.default_rng(seed)
    p = design_size(form, n)
    S = np.empty((p, n))
    S[0] = center
    S[1:] = lo + rng.random((p - 1, n)) * (hi - lo)
    U = (S - center) / sigma
    if form is RMForm.GP:
        basis = K.poly_features_numpy(U, K.LINEAR)
    else:
        basis = K.poly_features_numpy(U, _POLY_CODE[form])
    if np.linalg.matrix_rank(basis) < basis.shape[1]:
        raise DegenerateGeometry(f"{form.value} design is rank-deficient")
    return S


@dataclass
class ReducedModel:
    """A fitted surrogate of ``t`` around ``center``.

    Instances are immutable after :func:`build_rm` returns them.
    """

    form: RMForm
    center: np.ndarray
    sigma: float
    coefficients: dict
    samples: np.ndarray
    values: np.ndarray
    n_y: int = field(init=False)

    def __post_init__(self):
        self.n_y = self.values.shape[1]
        self.center.setflags(write=False)

    @property
    def n_w(self):
        return self.center.size

    def predict(self, w):
        """Model value ``r(w)`` of length ``n_y``."""
        w = np.asarray(w, dtype=float).reshape(-1)
        c = self.coefficients
        if self.form is RMForm.TAYLOR:
            return c["t0"] + c["J"] @ (w - self.center)
        u = ((w - self.center) / self.sigma)[None, :]
        if self.form is RMForm.GP:
            k = K.se_kernel(u, c["U"])[0]
            trend = K.poly_features(u, K.LINEAR)[0]
            return k @ c["alpha"] + trend @ c["beta"]
        return K.poly_features(u, c["code"])[0] @ c["B"]

    def jacobian(self, w):
        """Model Jacobian ``dr/dw`` of shape ``(n_y, n_w)``."""
        w = np.asarray(w, dtype=float).reshape(-1)
        c = self.coefficients
        if self.form is RMForm.TAYLOR:
            return c["J"].copy()
        u = (w - self.center) / self.sigma
        if self.form is RMForm.GP:
            dk = K.se_kernel_grad(u, c["U"])
            dtrend = K.poly_jacobian(u, K.LINEAR)
            return (c["alpha"].T @ dk + c["beta"].T @ dtrend) / self.sigma
        return (c["B"].T @ K.poly_jacobian(u, c["code"])) / self.sigma


def rm_predict(rm, w):
    return rm.predict(w)


def rm_jacobian(rm, w):
    return rm.jacobian(w)


def _cond_check(M, what):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularFit(f"{what} is numerically singular (condition {cond:.3g})")


def build_rm(form, samples, t_values, center, sigma):
    """Fit a reduced model of the requested form.

    Parameters
    ----------
    form : str or RMForm
    samples : ndarray, shape (p, n_w)
        Design points; for Taylor they must be the stencil returned by
        :func:`sample_design`.
    t_values : ndarray, shape (p, n_y)
        Black-box values at the design points.
    center : ndarray
    sigma : float

    Raises
    ------
    SingularFit
        If the least-squares or kriging system has condition above 1e12.
    """
    form = RMForm.parse(form)
    S = np.asarray(samples, dtype=float)
    T = np.asarray(t_values, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    center = np.array(center, dtype=float).reshape(-1)
    if S.shape[0] != T.shape[0]:
        raise ValueError("samples and t_values disagree in length")
    if S.shape[1] != center.size:
        raise ValueError("samples and center disagree in dimension")

    if form is RMForm.TAYLOR:
        n = center.size
        J = np.empty((T.shape[1], n))
        for i in range(n):
            dp, dm = S[1 + 2 * i], S[2 + 2 * i]
            J[:, i] = (T[1 + 2 * i] - T[2 + 2 * i]) / (dp[i] - dm[i])
        coeffs = {"t0": T[0].copy(), "J": J}
        return ReducedModel(form, center, float(sigma), coeffs, S.copy(), T.copy())

    U = (S - center) / sigma
    if form is RMForm.GP:
        P = K.poly_features(U, K.LINEAR)
        Kmat = K.se_kernel(U, U) + GP_JITTER * np.eye(U.shape[0])
        m = P.shape[1]
        A = np.block([[Kmat, P], [P.T, np.zeros((m, m))]])
        _cond_check(A, "kriging system")
        rhs = np.vstack([T, np.zeros((m, T.shape[1]))])
        sol = np.linalg.solve(A, rhs)
        coeffs = {"U": U, "alpha": sol[: U.shape[0]], "beta": sol[U.shape[0]:]}
        return ReducedModel(form, center, float(sigma), coeffs, S.copy(), T.copy())

    code = _POLY_CODE[form]
    Phi = K.poly_features(U, code)
    if Phi.shape[0] < Phi.shape[1]:
        raise SingularFit(f"{form.value} fit needs {Phi.shape[1]} points, got {Phi.shape[0]}")
    _cond_check(Phi, "design matrix")
    B, *_ = np.linalg.lstsq(Phi, T, rcond=None)
    coeffs = {"code": code, "B": B}
    return ReducedModel(form, center, float(sigma), coeffs, S.copy(), T.copy())


@dataclass
class FullyLinearResult:
    passed: bool
    max_residual: float
    threshold: float


def verify_fully_linear(rm, problem, sigma, params, ledger_or_oracle, rng=None):
    """Zeroth-order fully-linear check on fresh points.

    Draws ``params.n_validation`` points uniformly in the ball of radius
    ``sigma`` about the model center and checks
    ``||r(w) - t(w)|| <= kappa_h * sigma**2`` at each.

    Returns
    -------
    FullyLinearResult
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(ledger_or_oracle, BlackBoxOracle):
        oracle = ledger_or_oracle
    else:
        oracle = BlackBoxOracle(problem, ledger_or_oracle or EvaluationLedger())
    lo, hi = _sampling_box(rm.center, sigma, *problem.w_bounds)
    threshold = params.kappa_h * sigma**2
    worst = 0.0
    for _ in range(params.n_validation):
        w = lo + rng.random(rm.center.size) * (hi - lo)
        res = float(np.linalg.norm(rm.predict(w) - oracle(w, "validation")))
        worst = max(worst, res)
    return FullyLinearResult(worst <= threshold, worst, threshold)


def fit_at(problem, form, center, sigma, oracle, seed):
    """Sample, evaluate and fit in one call; sampling evaluations go through ``oracle``."""
    lb, ub = problem.w_bounds
    S = sample_design(center, sigma, form, seed, lb, ub)
    T = np.array([oracle(s, "sampling") for s in S])
    return build_rm(form, S, T, center, sigma)
