"""Bundled grey-box benchmark problems.

Glass-box parts are written once as symbolic expressions; values, gradients
and Jacobians are generated from them so the derivatives are exact. Black
boxes are plain numpy functions and are never differentiated.

Variable layout is always ``x = [w, y, z]``; the docstring of each builder
lists the order inside each block.
"""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import UnknownProblem
from .problem import GreyBoxProblem

logger = logging.getLogger(__name__)

INF = np.inf


@dataclass(frozen=True)
class BenchmarkSpec:
    """Registry entry for one bundled problem.

    ``tolerance_kind`` is ``"rel"`` or ``"abs"``; ``available`` is False for
    problems listed for completeness but not shipped.
    """

    name: str
    dims: tuple
    factory: Optional[Callable]
    reference: float
    tolerance: float
    tolerance_kind: str
    description: str
    available: bool = True

    def within_tolerance(self, value):
        err = abs(value - self.reference)
        if self.tolerance_kind == "rel":
            return err <= self.tolerance * abs(self.reference)
        return err <= self.tolerance

    def to_json(self):
        return {
            "name": self.name, "dims": list(self.dims),
            "reference_objective": self.reference if self.available else None,
            "tolerance": self.tolerance, "tolerance_kind": self.tolerance_kind,
            "description": self.description, "available": self.available,
        }


# --------------------------------------------------------------------------
# symbolic compilation


def _compile(n, build):
    """Lambdify ``(f, h, g)`` built by ``build(symbols)`` with exact derivatives."""
    import sympy as sp

    xs = sp.symbols(f"x0:{n}", real=True)
    f_expr, h_list, g_list = build(xs, sp)
    args = [list(xs)]

    def vec(exprs):
        if not exprs:
            return None, None
        fn = sp.lambdify(args, exprs, "numpy")
        jac = sp.Matrix(exprs).jacobian(xs)
        jfn = sp.lambdify(args, jac, "numpy")
        m = len(exprs)
        return (lambda x: np.array(fn(x), dtype=float).reshape(m),
                lambda x: np.array(jfn(x), dtype=float).reshape(m, n))

    ffn = sp.lambdify(args, f_expr, "numpy")
    gfn = sp.lambdify(args, [sp.diff(f_expr, v) for v in xs], "numpy")
    h, hj = vec(h_list)
    g, gj = vec(g_list)
    return {
        "objective": lambda x: float(ffn(x)),
        "objective_grad": lambda x: np.array(gfn(x), dtype=float).reshape(n),
        "eq_constraints": h, "eq_jacobian": hj,
        "ineq_constraints": g, "ineq_jacobian": gj,
    }


# --------------------------------------------------------------------------
# Colville


def colville_black_box(w):
    w1, w2, w3, w4 = w
    return np.array([
        0.8357 * w1 * w4 + 37.2392 * w1,
        0.00002584 * w3 * w4 - 0.00006663 * w2 * w4,
        2275.1327 / (w3 * w4) - 0.2668 * w1 / w4,
        1330.3294 / (w2 * w4) - 0.42 * w1 / w4,
    ])


def _colville_build(x, sp):
    w1, w2, w3, w4, y1, y2, y3, y4, z5 = x
    f = 5.3578 * w3**2 + y1
    g = [
        y2 - 0.0000734 * w1 * z5 - 1,
        0.000853007 * w2 * w4 + 0.00009395 * w1 * z5 - 0.00033085 * w3 * w4 - 1,
        y4 - 0.30586 * w3**2 / (w2 * w4) - 1,
        0.00024186 * w2 * w4 + 0.00010159 * w1 * w2 + 0.00007379 * w3**2 - 1,
        y3 - 0.40584 * z5 / w4 - 1,
        0.00029955 * w3 * w4 + 0.00007992 * w1 * w3 + 0.00012157 * w3 * z5 - 1,
    ]
    return f, [], g


def colville():
    """Colville-type problem; ``w = (w1..w4)``, ``y = (y1..y4)``, ``z = (z5,)``."""
    fns = _compiled("colville", 9, _colville_build)
    lb = [78, 33, 27, 27, -INF, -INF, -INF, -INF, 27]
    ub = [102, 45, 45, 45, INF, INF, INF, INF, 45]
    return GreyBoxProblem("colville", 4, 4, 1, black_box=colville_black_box, lb=lb, ub=ub, **fns)


# --------------------------------------------------------------------------
# Himmelblau


def himmelblau_black_box(w):
    w2, w3, w5 = w
    return np.array([w3**2, w2 * w5])


def _himmelblau_build(x, sp):
    w2, w3, w5, y1, y2, z1, z4, z6, z7, z8 = x
    f = 5.3578547 * y1 + 0.8356891 * z1 * w5 + 37.2932239 * z1 - 40792.141
    h = [
        z6 - (85.334407 + 0.0056858 * y2 + 0.00026 * z1 * z4 - 0.0022053 * w3 * w5),
        z7 - (80.51249 + 0.0071317 * y2 + 0.0029955 * z1 * w2 - 0.0021813 * w3**2),
        z8 - (9.300961 + 0.0047026 * w3 * w5 + 0.0012547 * z1 * w3 - 0.0019085 * w3 * z4),
    ]
    return f, h, []


def himmelblau():
    """Himmelblau-type problem; ``w = (w2, w3, w5)``, ``y = (y1, y2)``, ``z = (z1, z4, z6, z7, z8)``."""
    fns = _compiled("himmelblau", 10, _himmelblau_build)
    lb = [33, 27, 27, -INF, -INF, 78, 27, 0, 90, 20]
    ub = [45, 45, 45, INF, INF, 102, 45, 92, 110, 25]
    return GreyBoxProblem("himmelblau", 3, 2, 5, black_box=himmelblau_black_box, lb=lb, ub=ub, **fns)


# --------------------------------------------------------------------------
# Loeppky


def loeppky_black_box(w):
    w1, w2, w3 = w
    return np.array([3 * w1 * w2 + 2.2 * w1 * w3])


def _loeppky_build(x, sp):
    w1, w2, w3, y1, z4, z5, z6, z7 = x
    f = 6 * w1 + 4 * w2 + 5.5 * w3 + y1 + 1.4 * w2 * w3 + z4 + 0.5 * z5 + 0.2 * z6 + 0.1 * z7
    return f, [], []


def loeppky():
    """Loeppky-type problem; ``w = (w1, w2, w3)``, ``y = (y1,)``, ``z = (z4..z7)``."""
    fns = _compiled("loeppky", 8, _loeppky_build)
    lb = [0, 0, 0, -INF, 0, 0, 0, 0]
    ub = [1, 1, 1, INF, 1, 1, 1, 1]
    return GreyBoxProblem("loeppky", 3, 1, 4, black_box=loeppky_black_box, lb=lb, ub=ub, **fns)


# --------------------------------------------------------------------------
# Wing weight


def wing_weight_black_box(w):
    w1, w10 = w
    return np.array([w1 * w10])


def _wing_build(x, sp):
    w1, w10, y1, z2, z3, z4, z5, z6, z7, z8, z9 = x
    # Sweep angle z4 is in degrees.
    c = sp.cos(z4 * sp.pi / 180)
    f = (0.036 * w1**0.758 * z2**0.0035 * (z3 / c**2) ** 0.6 * z5**0.006 * z6**0.04
         * (100 * z7 / c) ** (-0.3) * (z8 * z9) ** 0.49 + y1)
    return f, [], []


def wing_weight():
    """Light-aircraft wing weight; ``w = (w1, w10)``, ``y = (y1,)``, ``z = (z2..z9)``."""
    fns = _compiled("wing_weight", 11, _wing_build)
    lb = [150, 0.025, -INF, 220, 6, -10, 16, 0.5, 0.08, 2.5, 1700]
    ub = [200, 0.08, INF, 300, 10, 10, 45, 1, 0.18, 6, 2500]
    return GreyBoxProblem("wing_weight", 2, 1, 8, black_box=wing_weight_black_box, lb=lb, ub=ub, **fns)


# --------------------------------------------------------------------------
# Welded beam

WELDED_TAU_MAX = 13600.0
WELDED_LOAD = 6000.0
WELDED_PC_COEF = 4.013 * 30e6 / (6.0 * 196.0)


def welded_beam_black_box(w):
    w1, w2, w3, w4 = w
    return np.array([1.10471 * w1**2 * w2 + 0.04811 * w3 * w4 * (14 + w2)])


def _welded_build(x, sp):
    w1, w2, w3, w4, y1 = x
    tau_p = 6000 / (sp.sqrt(2) * w1 * w2)
    M = 6000 * (14 + w2 / 2)
    R = sp.sqrt(w2**2 / 4 + ((w1 + w3) / 2) ** 2)
    J = 2 * (sp.sqrt(2) * w1 * w2 * (w2**2 / 12 + ((w1 + w3) / 2) ** 2))
    tau_pp = M * R / J
    tau = sp.sqrt(tau_p**2 + 2 * tau_p * tau_pp * w2 / (2 * R) + tau_pp**2)
    sigma = 504000 / (w4 * w3**2)
    delta = 2.1952 / (w3**3 * w4)
    Pc = WELDED_PC_COEF * (1 - 0.0282346 * w3) * w3 * w4**3
    g = [
        tau - WELDED_TAU_MAX,
        sigma - 30000,
        w1 - w4,
        0.10476 * w1**2 + 0.04811 * w3 * w4 * (14 + w2) - 5,
        0.125 - w1,
        delta - 0.25,
        WELDED_LOAD - Pc,
    ]
    return y1, [], g


def welded_beam():
    """Welded beam cost; ``w = (h, l, t, b)``, ``y = (cost,)``, no ``z``."""
    fns = _compiled("welded_beam", 5, _welded_build)
    lb = [0.125, 0.1, 0.1, 0.1, -INF]
    ub = [5, 10, 10, 5, INF]
    return GreyBoxProblem("welded_beam", 4, 1, 0, black_box=welded_beam_black_box, lb=lb, ub=ub, **fns)


# --------------------------------------------------------------------------
# Williams-Otto

WO_A = (5.9755e9, 2.5962e12, 9.6283e15)
WO_E = (120.0, 150.0, 200.0)
WO_RHO = 50.0

#: Names of the 30 variables, in order.
#: The problem works in scaled units: reaction rates in tens and flows in
#: hundreds, so every variable is of order one and a single trust-region
#: radius is commensurate across temperature, volume and flows.
WO_VARIABLES = (
    ["xA", "xB", "xC", "xP", "T", "V", "r1", "r2", "r3", "FA", "FB"]
    + [f"FR_{j}" for j in "ABCEPG"]
    + [f"Feff_{j}" for j in "ABCEPG"]
    + ["Feff_sum", "FG", "Fpurge", "FP", "eta_purge", "xE", "xG"]
)


WO_RATE_SCALE = 10.0
WO_FLOW_SCALE = 100.0
#: Physical value of each variable per problem unit.
WO_SCALE = np.concatenate([np.ones(6), np.full(3, WO_RATE_SCALE), np.full(18, WO_FLOW_SCALE), np.ones(3)])


def williams_otto_black_box(w):
    """Reaction rates of the CSTR; inputs ``(xA, xB, xC, xP, T, V)``."""
    xA, xB, xC, xP, T, V = w
    vr = V * WO_RHO
    return np.array([
        WO_A[0] * np.exp(-WO_E[0] / T) * xA * xB * vr,
        WO_A[1] * np.exp(-WO_E[1] / T) * xB * xC * vr,
        WO_A[2] * np.exp(-WO_E[2] / T) * xP * xC * vr,
    ])


def _wo_unpack(x):
    xA, xB, xC, xP, T, V, y1, y2, y3, FA, FB = x[:11]
    FR = x[11:17]
    Fe = x[17:23]
    Fs, FG, Fpu, FP, eta, xE, xG = x[23:30]
    return xA, xB, xC, xP, T, V, (y1, y2, y3), FA, FB, FR, Fe, Fs, FG, Fpu, FP, eta, xE, xG


def _wo_build(x, sp):
    x = [v * float(c) for v, c in zip(x, WO_SCALE)]
    xA, xB, xC, xP, T, V, y, FA, FB, FR, Fe, Fs, FG, Fpu, FP, eta, xE, xG = _wo_unpack(x)
    A, B, C, E, P, G = range(6)
    rho = WO_RHO
    f = -100 * (2207 * FP + 50 * Fpu - 168 * FA - 252 * FB - 2.22 * Fs - 84 * FG - 60 * V * rho) / (600 * V * rho)
    frac = [xA, xB, xC, xE, xP, xG]
    h = [
        Fe[A] - (FA + FR[A] - y[0]),
        Fe[B] - (FB + FR[B] - (y[0] + y[1])),
        Fe[C] - (FR[C] + 2 * y[0] - 2 * y[1] - y[2]),
        Fe[E] - (FR[E] + 2 * y[1]),
        Fe[P] - (0.1 * FR[E] + y[1] - 0.5 * y[2]),
        Fe[G] - 1.5 * y[2],
        Fs - sum(Fe),
        FG - Fe[G],
        Fpu - eta * (Fe[A] + Fe[B] + Fe[C] + 1.1 * Fe[E]),
    ]
    h += [FR[j] - (1 - eta) * Fe[j] for j in range(6)]
    h += [Fe[j] - Fs * frac[j] for j in range(6)]
    h += [FP - (Fe[P] - 0.1 * Fe[E])]
    return f, h, []


#: Balanced operating point used as the default start.
WO_SEED = {
    "V": 0.0952213880274209, "T": 5.8, "FP": 1.0220471993316949, "Fpurge": 7.092944066046297,
    "FG": 0.2546416177080731, "Feff_sum": 53.73152359591559, "FA": 3.032853228628288,
    "FB": 5.3367796544577795, "eta_purge": 0.1352200249213798,
    "Feff": [9.921446738565438, 16.72714547405174, 3.294404672195415, 20.465307176421106,
             3.0685779169738057, 0.2546416177080731],
    "FR": [8.579868463320505, 14.465300446186964, 2.8489351903200504, 17.697987830001807,
           2.6536447345674206, 0.22020897181556767],
    "x": [0.1846485279885039, 0.3113097182921363, 0.061312325646500375, 0.38088082761860875,
          0.05710945291726458, 0.004739147536985909],
}


def _wo_scaled_black_box(w):
    return williams_otto_black_box(w) / WO_RATE_SCALE


def williams_otto_seed(balanced=False):
    """Default start in problem units: the seed flows with the rates ``y`` at zero.

    With ``balanced=True`` the rates are set to ``t(w)`` instead, which makes
    the seed an exactly balanced flowsheet (zero infeasibility).
    """
    s = WO_SEED
    xA, xB, xC, xE, xP, xG = s["x"]
    x = np.array(
        [xA, xB, xC, xP, s["T"], s["V"], 0.0, 0.0, 0.0, s["FA"], s["FB"]]
        + s["FR"] + s["Feff"]
        + [s["Feff_sum"], s["FG"], s["Fpurge"], s["FP"], s["eta_purge"], xE, xG]
    )
    x = x / WO_SCALE
    if balanced:
        x[6:9] = _wo_scaled_black_box(x[:6])
    return x


def williams_otto():
    """Williams-Otto flowsheet with the reactor as black box.

    Variables are listed in :data:`WO_VARIABLES` and expressed in problem
    units; multiply by :data:`WO_SCALE` for physical values. The objective
    is the negated return on investment and does not depend on the units.
    """
    fns = _compiled("williams_otto", 30, _wo_build)
    lb = np.zeros(30)
    ub = np.full(30, INF)
    ub[:4] = 1.0
    lb[4], ub[4] = 5.8, 6.8
    lb[5], ub[5] = 0.03, 0.1
    lb[6:9] = -INF
    lb[9:11] = 1.0
    lb[11:17] = -INF
    ub[26] = 4.763
    ub[27:30] = 1.0
    return GreyBoxProblem("williams_otto", 6, 3, 21, black_box=_wo_scaled_black_box,
                          lb=lb / WO_SCALE, ub=ub / WO_SCALE, x0=williams_otto_seed(), **fns)


# --------------------------------------------------------------------------
# registry


@functools.lru_cache(maxsize=None)
def _compiled_cached(name, n, build):
    return _compile(n, build)


def _compiled(name, n, build):
    return dict(_compiled_cached(name, n, build))


REGISTRY = {
    "colville": BenchmarkSpec("colville", (4, 4, 1), colville, 10122.49, 1e-3, "rel",
                              "Colville-type polynomial problem with six inequalities"),
    "himmelblau": BenchmarkSpec("himmelblau", (3, 2, 5), himmelblau, -25822.95, 1e-3, "rel",
                                "Himmelblau-type problem with three equalities"),
    "loeppky": BenchmarkSpec("loeppky", (3, 1, 4), loeppky, -1.55e-7, 1e-4, "abs",
                             "Loeppky-type bound-constrained problem"),
    "wing_weight": BenchmarkSpec("wing_weight", (2, 1, 8), wing_weight, 123.25, 0.5, "abs",
                                 "Light aircraft wing weight"),
    "welded_beam": BenchmarkSpec("welded_beam", (4, 1, 0), welded_beam, 1.72, 0.02, "abs",
                                 "Welded beam fabrication cost"),
    "williams_otto": BenchmarkSpec("williams_otto", (6, 3, 21), williams_otto, -121.03, 2.0, "abs",
                                   "Williams-Otto flowsheet, reactor as black box (objective is -ROI)"),
    "biomass_hydrogen": BenchmarkSpec("biomass_hydrogen", (None, None, None), None, float("nan"), 0.0, "abs",
                                      "Biomass-based hydrogen flowsheet; formulation not shipped",
                                      available=False),
}

BENCHMARKS = tuple(name for name, spec in REGISTRY.items() if spec.available)


def _spec(name):
    spec = REGISTRY.get(name)
    if spec is None or not spec.available:
        known = ", ".join(BENCHMARKS)
        raise UnknownProblem(f"unknown or unavailable problem {name!r}; known problems: {known}")
    return spec


def make_problem(name):
    """Build a fresh :class:`GreyBoxProblem` for a bundled benchmark."""
    return _spec(name).factory()


def reference_solution(name):
    """``(objective, tolerance)`` of the reported optimum."""
    spec = _spec(name)
    return spec.reference, spec.tolerance


def registry_json(indent=2):
    """Machine-readable registry of all entries, including unavailable ones."""
    return json.dumps({k: v.to_json() for k, v in REGISTRY.items()}, indent=indent)
