"""Algorithm constants and their admissible domains."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass(frozen=True)
class AlgorithmParams:
    """Tuning constants of the trust-region funnel method.

    Every field can be overridden by name (see :meth:`replace`); the
    constructor validates all domain constraints and raises
    :class:`~trfunnel.errors.ConfigError` naming the offending key.
    """

    # trust-region update
    gamma_c: float = 0.5
    gamma_e: float = 2.0
    eta_1: float = 0.25
    eta_2: float = 0.75
    # compatibility and switching
    mu: float = 0.5
    gamma_s: float = 2.0
    kappa_Delta: float = 0.8
    kappa_mu: float = 1.2
    # funnel
    kappa_phi: float = 10.0
    delta: float = 0.01
    tau: float = 0.75
    kappa_f: float = 0.3
    phi_min: float = 1e-4
    eta: float = 1e-4
    # sampling radius
    xi: float = 0.5
    Psi: float = 0.5
    Delta_min: float = 1e-6
    Delta_0: float = 1.0
    sigma_0: float = 0.5
    # tolerances
    eps_theta: float = 1e-8
    eps_chi: float = 1e-4
    eps_comp: float = 1e-4
    eps_Delta: float = 1e-6
    # reduced-model certification
    kappa_g: float = 10.0
    kappa_h: float = 10.0
    n_validation: int = 2
    # filter margins
    gamma_theta: float = 0.01
    gamma_f: float = 0.01
    # run limits
    max_iter: int = 1000
    max_bb_evals: int = 1_000_000
    restoration_budget: int = 50
    nlp_tol: float = 1e-8

    def __post_init__(self):
        validate(self)

    def replace(self, **overrides):
        """Copy with overrides; unknown keys raise ConfigError."""
        known = {f.name for f in fields(self)}
        for key in overrides:
            if key not in known:
                raise ConfigError(f"unknown parameter {key!r}")
        return dataclasses.replace(self, **overrides)

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def q(self):
        """Guaranteed contraction factor of the funnel on theta-type steps."""
        return 1.0 - (1.0 - self.tau) * (1.0 - self.kappa_f)


def _open_unit(p, *names):
    for name in names:
        v = getattr(p, name)
        if not 0.0 < v < 1.0:
            raise ConfigError(f"{name} must lie in (0,1), got {v}")


def validate(p):
    """Check every domain constraint; raise ConfigError on the first violation."""
    for f in fields(p):
        v = getattr(p, f.name)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{f.name} must be a number, got {v!r}")
        if v != v:
            raise ConfigError(f"{f.name} must not be NaN")
    _open_unit(p, "gamma_c")
    if not p.gamma_e > 1.0:
        raise ConfigError(f"gamma_e must exceed 1, got {p.gamma_e}")
    if not 0.0 < p.eta_1 <= p.eta_2 < 1.0:
        raise ConfigError(f"eta_1 and eta_2 must satisfy 0 < eta_1 <= eta_2 < 1, got {p.eta_1}, {p.eta_2}")
    _open_unit(p, "mu")
    if not p.gamma_s > 1.0 / (1.0 + p.mu):
        raise ConfigError(f"gamma_s must exceed 1/(1+mu) = {1.0 / (1.0 + p.mu):.6g}, got {p.gamma_s}")
    _open_unit(p, "kappa_Delta", "delta", "tau", "kappa_f", "eta", "Psi", "gamma_theta", "gamma_f")
    if not p.kappa_phi > 1.0:
        raise ConfigError(f"kappa_phi must exceed 1, got {p.kappa_phi}")
    if not p.kappa_mu > 1.0:
        raise ConfigError(f"kappa_mu must exceed 1, got {p.kappa_mu}")
    for name in ("xi", "phi_min", "Delta_min", "Delta_0", "sigma_0", "eps_theta", "eps_chi",
                 "eps_comp", "eps_Delta", "kappa_g", "kappa_h", "nlp_tol"):
        if not getattr(p, name) > 0.0:
            raise ConfigError(f"{name} must be positive, got {getattr(p, name)}")
    if not p.eps_Delta >= p.Delta_min:
        raise ConfigError(f"eps_Delta must be at least Delta_min, got {p.eps_Delta} < {p.Delta_min}")
    if not p.Delta_0 >= p.Delta_min:
        raise ConfigError(f"Delta_0 must be at least Delta_min, got {p.Delta_0}")
    if not p.sigma_0 <= p.Delta_0:
        raise ConfigError(f"sigma_0 must not exceed Delta_0, got {p.sigma_0} > {p.Delta_0}")
    for name in ("n_validation", "restoration_budget"):
        if int(getattr(p, name)) != getattr(p, name) or getattr(p, name) < 1:
            raise ConfigError(f"{name} must be a positive integer, got {getattr(p, name)}")
    for name in ("max_iter", "max_bb_evals"):
        if int(getattr(p, name)) != getattr(p, name) or getattr(p, name) < 0:
            raise ConfigError(f"{name} must be a nonnegative integer, got {getattr(p, name)}")
