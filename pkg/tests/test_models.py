import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference
from trfunnel import BENCHMARKS, make_problem
from trfunnel.errors import DegenerateGeometry, SingularFit
from trfunnel.models import (
    RM_FORMS,
    FullyLinearParams,
    RMForm,
    build_rm,
    design_size,
    fit_at,
    rm_jacobian,
    rm_predict,
    sample_design,
    taylor_step,
    verify_fully_linear,
)
from trfunnel.nlp import project_glass_feasible
from trfunnel.params import AlgorithmParams
from trfunnel.problem import BlackBoxOracle, EvaluationLedger, GreyBoxProblem


def fit(form, t, center, sigma, seed=0):
    S = sample_design(center, sigma, form, seed)
    return build_rm(form, S, np.array([np.atleast_1d(t(s)) for s in S]), center, sigma)


def smooth_map(w):
    return np.array([np.sin(w[0]) * np.exp(0.3 * w[1]), w[0] ** 2 - w[1] * w[2] + 0.1 * w[2] ** 3])


# -- design --------------------------------------------------------------------


def test_linear_design_has_n_plus_one_points_in_the_ball():
    c = np.array([0.2, -0.1, 0.5])
    S = sample_design(c, 0.3, "linear", seed=1)
    assert S.shape == (4, 3)
    assert np.all(np.abs(S - c) <= 0.3)


def test_quadratic_design_size():
    assert sample_design(np.zeros(2), 0.5, "quadratic", seed=0).shape == (6, 2)
    assert design_size("quadratic", 2) == (2 + 1) * (2 + 2) // 2


@pytest.mark.parametrize("form", ["simple_quadratic", "gp", "taylor"])
def test_other_design_sizes(form):
    assert sample_design(np.zeros(4), 0.5, form, seed=0).shape == (9, 4)


def test_same_seed_same_design():
    a = sample_design(np.ones(3), 0.2, "quadratic", seed=7)
    b = sample_design(np.ones(3), 0.2, "quadratic", seed=7)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_design(np.ones(3), 0.2, "quadratic", seed=8))


@pytest.mark.parametrize("form", RM_FORMS)
def test_design_contains_center_and_respects_bounds(form):
    c = np.array([0.0, 0.95])
    lb, ub = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    S = sample_design(c, 0.5, form, seed=3, lb=lb, ub=ub)
    assert np.array_equal(S[0], c)
    assert np.all(S >= lb) and np.all(S <= ub)
    assert np.all(np.abs(S - c) <= 0.5 + 1e-15)


def test_flat_sampling_box_is_degenerate():
    with pytest.raises(DegenerateGeometry):
        sample_design(np.array([1.0, 0.0]), 0.1, "linear", seed=0, lb=np.array([1.0, -1.0]), ub=np.array([1.0, 1.0]))


def test_duplicate_points_make_a_singular_fit():
    S = np.array([[0.0, 0.0], [0.1, 0.0], [0.1, 0.0]])
    with pytest.raises(SingularFit):
        build_rm("linear", S, np.zeros(3), np.zeros(2), 0.1)


def test_nonpositive_sigma_rejected():
    with pytest.raises(ValueError):
        sample_design(np.zeros(2), 0.0, "linear", seed=0)


# -- fitting -------------------------------------------------------------------


def test_linear_reproduces_affine_map(rng):
    rm = fit("linear", lambda w: 2.0 * w + 1.0, np.array([0.4]), 0.2)
    for w in rng.uniform(-5, 5, (10, 1)):
        assert rm_predict(rm, w)[0] == pytest.approx(2.0 * w[0] + 1.0, abs=1e-12)
        assert rm_jacobian(rm, w)[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_quadratic_reproduces_bilinear_map(rng):
    c = np.array([0.3, -0.2])
    rm = fit("quadratic", lambda w: w[0] * w[1], c, 0.25, seed=5)
    pts = c + rng.uniform(-0.25, 0.25, (20, 2))
    err = max(abs(rm.predict(w)[0] - w[0] * w[1]) for w in pts)
    assert err <= 1e-8


def test_taylor_jacobian_of_exponential():
    sigma = 0.1
    h = taylor_step(sigma)
    oracle = math.sinh(h) / h
    rm = fit("taylor", np.exp, np.zeros(1), sigma)
    J = rm.jacobian(np.zeros(1))[0, 0]
    assert abs(J - 1.0) <= 1e-6
    assert J == pytest.approx(oracle, rel=1e-10)


def test_gp_interpolates_training_points():
    c = np.array([0.1, 0.2, 0.3])
    rm = fit("gp", smooth_map, c, 0.3, seed=2)
    for s, t in zip(rm.samples, rm.values):
        assert np.max(np.abs(rm.predict(s) - t)) <= 1e-8


def test_linear_jacobian_is_constant(rng):
    rm = fit("linear", smooth_map, np.zeros(3), 0.2)
    J0 = rm.jacobian(np.zeros(3))
    for w in rng.uniform(-1, 1, (5, 3)):
        assert np.array_equal(rm.jacobian(w), J0)


def test_simple_quadratic_has_no_interaction_terms(rng):
    rm = fit("simple_quadratic", smooth_map, np.zeros(3), 0.3)
    for w in rng.uniform(-0.3, 0.3, (5, 3)):
        H = central_difference(lambda v: rm.jacobian(v)[1], w)
        off = H - np.diag(np.diag(H))
        assert np.max(np.abs(off)) <= 1e-6


@pytest.mark.parametrize("form", RM_FORMS)
def test_interpolatory_forms_reproduce_the_center(form):
    c = np.array([0.3, 0.1, -0.2])
    rm = fit(form, smooth_map, c, 0.2, seed=4)
    assert np.max(np.abs(rm.predict(c) - smooth_map(c))) <= 1e-10


@pytest.mark.parametrize("form", RM_FORMS)
def test_jacobian_matches_differences_of_predict(form, rng):
    c = np.array([0.3, 0.1, -0.2])
    rm = fit(form, smooth_map, c, 0.2, seed=4)
    for w in c + rng.uniform(-0.2, 0.2, (5, 3)):
        J = rm.jacobian(w)
        Jfd = central_difference(rm.predict, w, rel_step=1e-7)
        assert np.allclose(J, Jfd, rtol=1e-6, atol=1e-6 * max(1.0, np.max(np.abs(J))))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_linear_model_is_exact_on_affine_maps_for_any_seed(seed, sigma):
    A = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]])
    b = np.array([0.7, -1.1])
    c = np.array([0.2, 0.4, -0.3])
    rm = fit("linear", lambda w: A @ w + b, c, sigma, seed=seed)
    assert np.allclose(rm.jacobian(c), A, atol=1e-8)


# -- fully-linear certification -----------------------------------------------


def _box_problem(t, n_w, n_y):
    n = n_w + n_y
    return GreyBoxProblem("box", n_w, n_y, 0, objective=lambda x: 0.0, black_box=t,
                          lb=np.full(n, -5.0), ub=np.full(n, 5.0))


def test_exact_surrogate_is_certified():
    p = _box_problem(lambda w: np.array([3.0 * w[0] - w[1]]), 2, 1)
    rm = fit("linear", p.black_box, np.zeros(2), 0.1)
    res = verify_fully_linear(rm, p, 0.1, FullyLinearParams(kappa_h=1e-6), EvaluationLedger())
    assert res.passed and res.max_residual <= 1e-12


def test_constant_offset_fails_with_that_residual():
    offset = 0.5
    p = _box_problem(lambda w: np.array([w[0] + offset]), 1, 1)
    rm = fit("linear", lambda w: np.array([w[0]]), np.zeros(1), 0.1)
    params = FullyLinearParams(kappa_h=10.0, n_validation=3)
    ledger = EvaluationLedger()
    res = verify_fully_linear(rm, p, 0.1, params, ledger)
    assert offset > params.kappa_h * 0.1**2
    assert not res.passed
    assert res.max_residual == pytest.approx(offset, abs=1e-12)
    assert ledger.by_purpose["validation"] == 3


def test_halving_sigma_quarters_the_threshold():
    p = _box_problem(lambda w: w.copy(), 1, 1)
    rm = fit("linear", p.black_box, np.zeros(1), 0.2)
    fl = FullyLinearParams()
    a = verify_fully_linear(rm, p, 0.2, fl, EvaluationLedger()).threshold
    b = verify_fully_linear(rm, p, 0.1, fl, EvaluationLedger()).threshold
    assert a == pytest.approx(4.0 * b, rel=1e-14)


def test_fully_linear_params_validation():
    with pytest.raises(ValueError):
        FullyLinearParams(kappa_h=0.0)
    with pytest.raises(ValueError):
        FullyLinearParams(n_validation=0)


def residual_slope(t, c, sigmas, form="linear", seed=11):
    """Slope of log max-residual against log sigma, probing the same scaled points at each sigma."""
    c = np.asarray(c, dtype=float)
    probe = np.random.default_rng(99).uniform(-1, 1, (500, c.size))
    residuals = []
    for s in sigmas:
        rm = fit(form, t, c, s, seed=seed)
        residuals.append(max(np.linalg.norm(rm.predict(c + s * u) - t(c + s * u)) for u in probe))
    slope = np.polyfit(np.log(sigmas), np.log(residuals), 1)[0]
    return float(slope), residuals


def linear_rm_residual_slope(sigmas=(0.4, 0.2, 0.1, 0.05), seed=11):
    """Slope of log max-residual against log sigma for a Linear model of a quadratic map."""
    H = np.array([[2.0, 0.5, 0.0], [0.5, -1.0, 0.3], [0.0, 0.3, 1.5]])
    g = np.array([1.0, -0.5, 0.25])

    def t(w):
        return np.array([0.5 * w @ H @ w + g @ w + 1.0])

    return residual_slope(t, [0.1, -0.2, 0.3], sigmas, seed=seed)


def test_linear_model_error_decays_like_sigma_squared():
    slope, _ = linear_rm_residual_slope()
    assert 1.8 <= slope <= 2.2


def _start(p):
    x0 = p.x0 if p.x0 is not None else p.default_point()
    return project_glass_feasible(p, np.clip(x0, p.lb, p.ub))[0]


@pytest.mark.parametrize("name", BENCHMARKS)
def test_rebuild_loop_certifies_at_the_initial_point(name):
    """At most five refits (halving sigma from the third) certify every bundled start."""
    p = make_problem(name)
    params = AlgorithmParams()
    fl = FullyLinearParams(params.kappa_g, params.kappa_h, params.n_validation)
    w = _start(p)[p.w_slice]
    for form in RM_FORMS:
        oracle = BlackBoxOracle(p)
        sigma = params.sigma_0
        for attempt in range(5):
            if attempt >= 2:
                sigma *= 0.5
            rm = fit_at(p, form, w, sigma, oracle, seed=[0, 0, attempt])
            rng = np.random.default_rng([0, 0, attempt, 1])
            if verify_fully_linear(rm, p, sigma, fl, oracle, rng).passed:
                break
        else:
            pytest.fail(f"{name}/{form}: not certified after 5 attempts")


@pytest.mark.parametrize("form", ["linear", "taylor"])
def test_williams_otto_models_obey_the_sigma_squared_law(form):
    """At small radii the reactor curvature exceeds kappa_h; the error still decays like sigma**2."""
    p = make_problem("williams_otto")
    w = _start(p)[p.w_slice]
    slope, residuals = residual_slope(p.black_box, w, (0.02, 0.01, 0.005, 0.0025), form=form)
    assert 1.8 <= slope <= 2.2
    assert residuals[-1] / 0.0025**2 > AlgorithmParams().kappa_h


def test_form_names_parse_and_reject_unknown():
    assert RMForm.parse("TAYLOR") is RMForm.TAYLOR
    assert RMForm.parse(RMForm.GP) is RMForm.GP
    with pytest.raises(ValueError):
        RMForm.parse("cubic")
