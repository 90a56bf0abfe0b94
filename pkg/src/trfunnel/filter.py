"""Classical trust-region filter as an alternative acceptance strategy."""

from __future__ import annotations

from dataclasses import dataclass, field

from .funnel import StepDecision, StepKind, armijo_holds, switching_holds


@dataclass
class FilterSet:
    """Mutually nondominated ``(f, theta)`` pairs with envelope margins."""

    entries: list = field(default_factory=list)
    gamma_theta: float = 0.01
    gamma_f: float = 0.01

    def __len__(self):
        return len(self.entries)

    def copy(self):
        return FilterSet(list(self.entries), self.gamma_theta, self.gamma_f)


def _dominates(a, b):
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def filter_acceptable(flt, f_trial, theta_trial):
    """True iff the trial improves on every entry by the envelope margins."""
    for f_j, th_j in flt.entries:
        if not (theta_trial <= (1.0 - flt.gamma_theta) * th_j or f_trial <= f_j - flt.gamma_f * th_j):
            return False
    return True


def filter_augment(flt, f, theta):
    """Return a new filter with ``(f, theta)`` added and dominated entries removed."""
    new = (float(f), float(theta))
    kept = [e for e in flt.entries if not _dominates(new, e) and e != new]
    if not any(_dominates(e, new) for e in kept):
        kept.append(new)
    return FilterSet(kept, flt.gamma_theta, flt.gamma_f)


def is_dominance_free(flt):
    es = flt.entries
    return not any(_dominates(es[i], es[j]) for i in range(len(es)) for j in range(len(es)) if i != j)


def filter_admissible(flt, f_k, theta_k, f_trial, theta_trial):
    """Acceptability against the filter extended by the current iterate."""
    env = FilterSet(flt.entries + [(f_k, theta_k)], flt.gamma_theta, flt.gamma_f)
    return filter_acceptable(env, f_trial, theta_trial)


def classify_filter_step(flt, f_k, f_trial, theta_k, theta_trial, Delta, params):
    """Classify a trial point under the filter.

    The trial must be acceptable to the filter and the current iterate.
    Then, if the switching condition holds, Armijo decrease decides between
    f-type and rejection; otherwise the step is theta-type.
    """
    tests = {"gate": filter_admissible(flt, f_k, theta_k, f_trial, theta_trial)}
    if not tests["gate"]:
        return StepDecision(StepKind.REJECTED, tests)
    tests["switching"] = switching_holds(f_k, f_trial, theta_k, params)
    if tests["switching"]:
        tests["armijo"] = armijo_holds(f_k, f_trial, Delta, params)
        return StepDecision(StepKind.FTYPE if tests["armijo"] else StepKind.REJECTED, tests)
    return StepDecision(StepKind.THETATYPE, tests)
