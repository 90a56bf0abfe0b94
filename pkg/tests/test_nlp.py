import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import StubModel, exact_linear_model
from oracles import ball_qp_min, box_qp_min, lp_vertex_min
from trfunnel.models import build_rm, sample_design
from trfunnel.nlp import (
    INFEASIBLE,
    SOLVED,
    CriticalityWarning,
    NlpSpec,
    compatibility_radius,
    compatibility_step,
    criticality_measure,
    kkt_residuals,
    project_glass_feasible,
    register_engine,
    restoration_step,
    solve_nlp,
    solve_trsp,
)
from trfunnel.nlp.subproblems import criticality_lp
from trfunnel.params import AlgorithmParams
from trfunnel.problem import GreyBoxProblem


def quad(a, d=None):
    a = np.asarray(a, dtype=float)
    d = np.ones_like(a) if d is None else np.asarray(d, dtype=float)
    return (lambda x: float(np.sum(d * (x - a) ** 2))), (lambda x: 2.0 * d * (x - a))


# -- solve_nlp -----------------------------------------------------------------


@pytest.mark.parametrize("engine", ["slsqp", "auglag"])
def test_one_dimensional_trust_region_quadratic(engine):
    x_star, val = box_qp_min([1.0], [1.0], [-0.5], [0.5])
    f, g = quad([1.0])
    spec = NlpSpec(f, g, x0=[0.0], lb=[-5.0], ub=[5.0], tr_center=[0.0], tr_radius=0.5)
    sol = solve_nlp(spec, engine=engine)
    assert sol.x[0] == pytest.approx(x_star[0], abs=1e-8)
    assert sol.fun == pytest.approx(val, abs=1e-8)
    assert (x_star[0], val) == (0.5, 0.25)


@pytest.mark.parametrize("engine", ["slsqp", "auglag"])
def test_single_active_inequality_has_unit_multiplier(engine):
    spec = NlpSpec(lambda x: float(x[0]), lambda x: np.ones(1), x0=[3.0],
                   ineq=lambda x: np.array([2.0 - x[0]]), ineq_jac=lambda x: np.array([[-1.0]]))
    sol = solve_nlp(spec, engine=engine)
    assert sol.status == SOLVED
    assert sol.x[0] == pytest.approx(2.0, abs=1e-8)
    assert sol.multipliers["ineq"][0] == pytest.approx(1.0, abs=1e-8)


def test_contradictory_equalities_are_infeasible():
    spec = NlpSpec(lambda x: 0.0, lambda x: np.zeros(1), x0=[0.5],
                   eq=lambda x: np.array([x[0], x[0] - 1.0]), eq_jac=lambda x: np.array([[1.0], [1.0]]))
    assert solve_nlp(spec).status == INFEASIBLE


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(0.1, 10), min_size=3, max_size=3),
       st.floats(0.05, 2.0))
def test_box_trust_region_qp_matches_clipping(a, d, radius):
    a, d = np.array(a), np.array(d)
    c = np.array([0.2, -0.1, 0.0])
    lb, ub = np.full(3, -1.0), np.full(3, 1.5)
    x_star, val = box_qp_min(d, a, np.maximum(lb, c - radius), np.minimum(ub, c + radius))
    f, g = quad(a, d)
    sol = solve_nlp(NlpSpec(f, g, x0=c, lb=lb, ub=ub, tr_center=c, tr_radius=radius))
    assert sol.fun == pytest.approx(val, abs=1e-8)
    assert np.allclose(sol.x, x_star, atol=1e-5)


@pytest.mark.parametrize("a", [[3.0, 4.0], [0.3, -0.2], [-2.0, 1.0], [0.0, -5.0]])
def test_euclidean_ball_qp_matches_projection(a):
    c, r = np.array([0.0, 0.0]), 1.0
    x_star, val = ball_qp_min(a, c, r)
    f, g = quad(a)
    sol = solve_nlp(NlpSpec(f, g, x0=c, tr_center=c, tr_radius=r, tr_norm=2))
    assert sol.fun == pytest.approx(val, abs=1e-8)
    assert np.allclose(sol.x, x_star, atol=1e-5)


def test_objective_never_increases_from_a_feasible_start(rng):
    for _ in range(10):
        a = rng.normal(size=4)
        f, g = quad(a)
        x0 = rng.uniform(-0.5, 0.5, 4)
        spec = NlpSpec(f, g, x0=x0, lb=np.full(4, -1.0), ub=np.full(4, 1.0),
                       ineq=lambda x: np.array([np.sum(x**2) - 1.0]), ineq_jac=lambda x: 2.0 * x[None, :])
        assert solve_nlp(spec).fun <= f(x0) + 1e-12


def test_identical_specs_give_bitwise_identical_solutions():
    def make():
        return NlpSpec(lambda x: float((x[0] - 1) ** 4 + (x[1] + x[0]) ** 2),
                       lambda x: np.array([4 * (x[0] - 1) ** 3 + 2 * (x[1] + x[0]), 2 * (x[1] + x[0])]),
                       x0=[0.0, 0.0], eq=lambda x: np.array([x[0] - x[1] ** 2 - 0.2]),
                       eq_jac=lambda x: np.array([[1.0, -2 * x[1]]]))

    a, b = solve_nlp(make()), solve_nlp(make())
    assert a.x.tobytes() == b.x.tobytes() and a.fun == b.fun


def test_kkt_residuals_flag_a_non_stationary_point():
    f, g = quad([1.0, 1.0])
    spec = NlpSpec(f, g, x0=[0.0, 0.0])
    stat, feas, comp, _ = kkt_residuals(spec, np.array([0.0, 0.0]))
    assert stat > 0.5 and feas == 0.0 and comp == 0.0


def test_registered_engine_is_used():
    calls = []

    def nudge(spec, x0, lb, ub, tol, max_inner):
        calls.append(1)
        return np.clip(np.full_like(x0, 0.25), lb, ub), 1, "custom", False

    register_engine("nudge", nudge)
    f, g = quad([0.25])
    sol = solve_nlp(NlpSpec(f, g, x0=[0.0]), engine="nudge")
    assert calls and sol.x[0] == 0.25 and sol.status == SOLVED


# -- criticality ------------------------------------------------------------------


def _problem(n_w, n_y, n_z, f, grad, lb, ub, h=None, jh=None, g=None, jg=None):
    return GreyBoxProblem("p", n_w, n_y, n_z, objective=f, objective_grad=grad, black_box=lambda w: np.zeros(n_y),
                          lb=lb, ub=ub, eq_constraints=h, eq_jacobian=jh, ineq_constraints=g, ineq_jacobian=jg)


def _no_model(n_w, n_y):
    return StubModel(lambda w: np.zeros(n_y), lambda w: np.zeros((n_y, n_w)))


def test_zero_gradient_has_zero_criticality():
    p = _problem(0, 0, 2, lambda x: 0.0, lambda x: np.zeros(2), [-5, -5], [5, 5])
    assert criticality_measure(p, _no_model(0, 0), np.zeros(2)) == 0.0


def test_linear_objective_in_one_glass_variable():
    assert lp_vertex_min([1.0]) == -1.0
    p = _problem(0, 0, 1, lambda x: x[0], lambda x: np.ones(1), [-5], [5])
    assert criticality_measure(p, _no_model(0, 0), np.zeros(1)) == pytest.approx(1.0, abs=1e-12)


def test_linking_row_limits_the_output_direction():
    # f = y, v_y = 2 v_w, |v| <= 1  ->  v_w in [-1/2, 1/2], chi = 1.
    A_eq = np.array([[-2.0, 1.0]])
    expected = -lp_vertex_min([0.0, 1.0], A_eq=A_eq)
    p = _problem(1, 1, 0, lambda x: x[1], lambda x: np.array([0.0, 1.0]), [-5, -5], [5, 5])
    rm = StubModel(lambda w: 2.0 * w, lambda w: np.array([[2.0]]))
    assert criticality_measure(p, rm, np.zeros(2)) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(1.0)


def test_active_bound_reduces_criticality():
    # Minimising x at its lower bound: no feasible descent direction.
    p = _problem(0, 0, 1, lambda x: x[0], lambda x: np.ones(1), [0], [5])
    assert criticality_measure(p, _no_model(0, 0), np.zeros(1)) == 0.0


def _clashing_rows_problem():
    # At x = 0 the linearised rows demand v <= -1 and v >= 1 at once.
    return _problem(0, 0, 1, lambda x: x[0], lambda x: np.ones(1), [-5], [5],
                    g=lambda x: np.array([x[0] + 1.0, 1.0 - x[0]]), jg=lambda x: np.array([[1.0], [-1.0]]))


def test_violated_linearisation_leaves_only_the_null_direction():
    assert lp_vertex_min([1.0], A_ub=[[1.0], [-1.0]], b_ub=[-1.0, -1.0]) is None
    assert lp_vertex_min([1.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, 0.0]) == 0.0
    assert criticality_measure(_clashing_rows_problem(), _no_model(0, 0), np.zeros(1)) == 0.0


def test_failed_criticality_lp_warns_and_returns_zero(monkeypatch):
    import trfunnel.nlp.subproblems as sub

    monkeypatch.setattr(sub, "linprog", lambda *a, **k: type("R", (), {"status": 2})())
    p = _problem(0, 0, 1, lambda x: x[0], lambda x: np.ones(1), [-5], [5])
    with pytest.warns(CriticalityWarning):
        chi = criticality_measure(p, _no_model(0, 0), np.zeros(1))
    assert chi == 0.0


def test_criticality_lp_matches_vertex_enumeration(rng):
    for trial in range(300):
        n = int(rng.integers(1, 4))
        c = rng.normal(size=n)
        m_eq = int(rng.integers(0, n))
        A_eq = rng.normal(size=(m_eq, n)) if m_eq else None
        m_ub = int(rng.integers(0, 3))
        A_ub = rng.normal(size=(m_ub, n)) if m_ub else None
        b_ub = rng.uniform(0, 1, m_ub) if m_ub else None
        lo = -rng.uniform(0.1, 1.0, n)
        hi = rng.uniform(0.1, 1.0, n)
        chi, _, ok = criticality_lp(c, A_eq, A_ub, b_ub, lo, hi)
        oracle = lp_vertex_min(c, A_eq, A_ub, b_ub, lo, hi)
        assert ok and oracle is not None
        assert chi == pytest.approx(abs(min(oracle, 0.0)), abs=1e-6), trial


# -- compatibility -------------------------------------------------------------------


def _scalar_link_problem(y_fixed=None):
    lb, ub = [-5.0, -10.0], [5.0, 10.0]
    if y_fixed is not None:
        lb[1] = ub[1] = y_fixed
    return GreyBoxProblem("s", 1, 1, 0, objective=lambda x: x[1], objective_grad=lambda x: np.array([0.0, 1.0]),
                          black_box=lambda w: w.copy(), lb=lb, ub=ub)


def test_compatible_start_needs_no_step():
    p = _scalar_link_problem()
    rm = exact_linear_model(lambda w: w, [0.7])
    d, alpha, _ = compatibility_step(p, rm, np.array([0.7, 0.7]), 1.0, AlgorithmParams())
    assert alpha == 0.0 and np.all(d == 0.0)


def test_scalar_compatibility_problem():
    params = AlgorithmParams(kappa_Delta=0.8, kappa_mu=1.2, mu=0.5)
    radius = compatibility_radius(1.0, params)
    assert radius == pytest.approx(0.8 * min(1.0, 1.2), abs=1e-15)
    # min |2 - w| over |w| <= 0.8: w* = 0.8, alpha = 1.2.
    w_star = min(2.0, radius)
    p = _scalar_link_problem()
    rm = exact_linear_model(lambda w: w, [0.0])
    d, alpha, _ = compatibility_step(p, rm, np.array([0.0, 2.0]), 1.0, params)
    assert d[0] == pytest.approx(w_star, abs=1e-8)
    assert d[1] == 0.0
    assert alpha == pytest.approx(2.0 - w_star, abs=1e-8)
    assert alpha > params.eps_comp


def test_compatibility_radius_shrinks_for_small_regions():
    p = AlgorithmParams()
    assert compatibility_radius(0.01, p) == pytest.approx(p.kappa_Delta * 0.01 * p.kappa_mu * 0.01**p.mu)


# -- TRSP ----------------------------------------------------------------------------


def test_trsp_from_a_stationary_point_does_not_move():
    p = _problem(0, 0, 1, lambda x: (x[0] - 1.0) ** 2, lambda x: 2 * (x - 1.0), [-5], [5])
    s, _, _, _ = solve_trsp(p, _no_model(0, 0), np.array([1.0]), np.zeros(1), 0.5)
    assert np.linalg.norm(s) <= 1e-8


def test_trsp_glass_only_quadratic():
    x_star, _ = box_qp_min([1.0], [1.0], [-0.5], [0.5])
    p = _problem(0, 0, 1, lambda x: (x[0] - 1.0) ** 2, lambda x: 2 * (x - 1.0), [-5], [5])
    s, xs, fs, _ = solve_trsp(p, _no_model(0, 0), np.zeros(1), np.zeros(1), 0.5)
    assert s[0] == pytest.approx(x_star[0], abs=1e-8)
    assert fs == pytest.approx(0.25, abs=1e-8)


def _square_problem():
    p = GreyBoxProblem("sq", 1, 1, 0, objective=lambda x: x[1], objective_grad=lambda x: np.array([0.0, 1.0]),
                       black_box=lambda w: w**2, lb=[0.0, -10.0], ub=[2.0, 10.0])
    S = sample_design(np.ones(1), 0.3, "quadratic", seed=0)
    return p, build_rm("quadratic", S, S**2, np.ones(1), 0.3)


def _min_square_over(w_lo, w_hi, y_lo, y_hi):
    """Grid oracle for min y s.t. y = w**2 over a box."""
    w = np.linspace(w_lo, w_hi, 200001)
    y = w**2
    ok = (y >= y_lo) & (y <= y_hi)
    i = np.argmin(np.where(ok, y, np.inf))
    return w[i], y[i]


def test_trsp_through_a_quadratic_model():
    # y starts low enough that only the w-interval [0.5, 1.5] binds.
    w_ref, y_ref = _min_square_over(0.5, 1.5, 0.0, 1.0)
    p, rm = _square_problem()
    x = np.array([1.0, 0.5])
    d = np.array([0.75, 0.75**2]) - x
    s, xs, fs, _ = solve_trsp(p, rm, x, d, 0.5)
    assert (w_ref, y_ref) == (pytest.approx(0.5), pytest.approx(0.25))
    assert xs[0] == pytest.approx(0.5, abs=1e-8)
    assert xs[1] == pytest.approx(0.25, abs=1e-8)
    assert fs <= 0.75**2


def test_trsp_box_also_limits_the_outputs():
    # From y = 1 the box caps y below at 0.5, so w stops at sqrt(0.5).
    w_ref, y_ref = _min_square_over(0.5, 1.5, 0.5, 1.5)
    p, rm = _square_problem()
    s, xs, _, _ = solve_trsp(p, rm, np.array([1.0, 1.0]), np.zeros(2), 0.5)
    assert xs[0] == pytest.approx(w_ref, abs=1e-5)
    assert xs[1] == pytest.approx(y_ref, abs=1e-5)


def test_trsp_respects_radius_and_linking(rng):
    H = np.array([[2.0, 0.3], [0.3, 1.0]])

    def t(w):
        return np.array([np.sin(w[0]) + w[1] ** 2, w[0] * w[1]])

    p = GreyBoxProblem("mix", 2, 2, 1, objective=lambda x: x[2] - 2 * x[3] + x[4] ** 2 + x[:2] @ H @ x[:2],
                       objective_grad=lambda x: np.concatenate([2 * H @ x[:2], [1.0, -2.0, 2 * x[4]]]),
                       black_box=t, lb=[-2, -2, -9, -9, -2], ub=[2, 2, 9, 9, 2])
    for _ in range(10):
        c = rng.uniform(-1, 1, 2)
        S = sample_design(c, 0.2, "gp", seed=int(rng.integers(1000)))
        rm = build_rm("gp", S, np.array([t(s) for s in S]), c, 0.2)
        x = np.concatenate([c, rm.predict(c), rng.uniform(-1, 1, 1)])
        Delta = float(rng.uniform(0.05, 0.8))
        s, xs, _, _ = solve_trsp(p, rm, x, np.zeros(5), Delta)
        assert np.max(np.abs(s)) <= Delta + 1e-8
        assert np.linalg.norm(xs[2:4] - rm.predict(xs[:2])) <= 1e-8


# -- restoration and start projection -------------------------------------------------


def test_restoration_step_moves_outputs_within_the_radius():
    p = _scalar_link_problem()
    rm = exact_linear_model(lambda w: w, [0.0])
    xr, ar, _ = restoration_step(p, rm, np.array([0.0, 3.0]), 0.5)
    assert ar == pytest.approx(2.0, abs=1e-7)
    assert np.max(np.abs(xr - np.array([0.0, 3.0]))) <= 0.5 + 1e-12


def test_projection_reaches_the_glass_box_feasible_set():
    p = _problem(0, 0, 2, lambda x: 0.0, lambda x: np.zeros(2), [-5, -5], [5, 5],
                 h=lambda x: np.array([x[0] + x[1] - 1.0]), jh=lambda x: np.array([[1.0, 1.0]]))
    x, _ = project_glass_feasible(p, np.array([3.0, 3.0]))
    assert abs(x[0] + x[1] - 1.0) <= 1e-8
