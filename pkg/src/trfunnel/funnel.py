"""Funnel acceptance logic and trust-region radius updates.

All functions here are pure maps over scalars so a trace can be replayed
from its logged columns alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class StepKind(str, Enum):
    FTYPE = "f"
    THETATYPE = "theta"
    REJECTED = "rejected"


@dataclass(frozen=True)
class FunnelState:
    """Current funnel width ``phi``."""

    phi: float

    def __post_init__(self):
        if not self.phi >= 0.0:
            raise ValueError(f"funnel width must be nonnegative, got {self.phi}")


@dataclass(frozen=True)
class StepDecision:
    """Outcome of the acceptance tests.

    ``tests`` maps test names (``gate``, ``switching``, ``armijo``,
    ``theta_decrease``) to their outcome; tests that were not reached in the
    evaluation order are absent.
    """

    kind: StepKind
    tests: dict = field(default_factory=dict)

    @property
    def accepted(self):
        return self.kind is not StepKind.REJECTED


def init_funnel(theta0, params):
    """Initial width ``max(phi_min, kappa_phi * theta0)``."""
    return FunnelState(max(params.phi_min, params.kappa_phi * theta0))


def switching_holds(f_k, f_trial, theta_k, params):
    return f_k - f_trial >= params.delta * theta_k**params.gamma_s


def armijo_holds(f_k, f_trial, Delta, params):
    return f_k - f_trial >= params.eta * Delta


def classify_step(f_k, f_trial, theta_k, theta_trial, phi, Delta, params):
    """Classify a trial point as f-type, theta-type or rejected.

    Order of evaluation: the funnel gate ``theta_trial <= phi``; then the
    switching condition; if switching holds, the Armijo decrease decides
    between f-type and rejection, otherwise the funnel decrease
    ``theta_trial <= tau * phi`` decides between theta-type and rejection.
    """
    tests = {"gate": theta_trial <= phi}
    if not tests["gate"]:
        return StepDecision(StepKind.REJECTED, tests)
    tests["switching"] = switching_holds(f_k, f_trial, theta_k, params)
    if tests["switching"]:
        tests["armijo"] = armijo_holds(f_k, f_trial, Delta, params)
        return StepDecision(StepKind.FTYPE if tests["armijo"] else StepKind.REJECTED, tests)
    tests["theta_decrease"] = theta_trial <= params.tau * phi
    return StepDecision(StepKind.THETATYPE if tests["theta_decrease"] else StepKind.REJECTED, tests)


def update_funnel(state, theta_trial, kappa_f):
    """Shrink the funnel after a theta-type step: ``(1 - kappa_f) theta + kappa_f phi``.

    Raises
    ------
    ValueError
        If ``theta_trial`` exceeds the current width.
    """
    if theta_trial > state.phi:
        raise ValueError(f"theta_trial {theta_trial} exceeds the funnel width {state.phi}")
    return FunnelState((1.0 - kappa_f) * theta_trial + kappa_f * state.phi)


def reduction_ratio(theta_k, theta_trial, rm_mismatch_at_center, eps_theta):
    """Ratio of achieved infeasibility decrease to the model mismatch at the center."""
    return (theta_k - theta_trial + eps_theta) / max(rm_mismatch_at_center, eps_theta)


def update_tr_theta_type(rho, step_norm, Delta, params):
    """Radius after a theta-type step, by reduction-ratio band."""
    if rho < params.eta_1:
        return params.gamma_c * step_norm
    if rho < params.eta_2:
        return Delta
    return max(params.gamma_e * step_norm, Delta)


def update_tr_f_type(step_norm, Delta, gamma_e):
    """Radius after an f-type step; never smaller than ``Delta``."""
    return max(gamma_e * step_norm, Delta)


def update_tr_rejected(step_norm, params):
    return params.gamma_c * step_norm
