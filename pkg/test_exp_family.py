import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from errors import ConfigError, DegenerateSegment, DomainError, TieBreakUnsupported
from exp_family import (
    ModelId,
    QuadraticCoeffs,
    dstar,
    get_model,
    grad_a,
    grad_a_inv,
    in_mean_domain,
    log_partition,
    natural_domain_contains,
    prepare_series,
    quadratic_convex,
    quadratic_dual,
    quadratic_dual_arrays,
    quadratic_mu_max,
    regression_coeffs,
    segment_cost_min,
    segment_costs,
    sufficient_stats,
)

# interior sampling ranges of the mean domain
MEAN_RANGES = {
    "gauss": (-5.0, 5.0),
    "poisson": (0.1, 10.0),
    "exponential": (0.1, 10.0),
    "geometric": (1.1, 10.0),
    "bernoulli": (0.05, 0.95),
    "binomial": (0.05, 0.95),
    "negbin": (0.1, 10.0),
    "variance": (0.1, 10.0),
}


def test_get_model_rejects_unknown_names():
    with pytest.raises(ConfigError, match="unknown model"):
        get_model("cauchy")


def test_get_model_trials_only_for_count_models():
    assert get_model("binomial", trials=4).trials == 4
    assert get_model("binomial").trials == 10
    assert get_model("poisson", trials=4).trials == 1
    with pytest.raises(ConfigError):
        get_model("negbin", trials=0)


@pytest.mark.parametrize("name", sorted(MEAN_RANGES))
def test_inverse_mean_map_round_trip_and_conjugate(name):
    model = get_model(name)
    rng = np.random.default_rng(7)
    lo, hi = MEAN_RANGES[name]
    for x in rng.uniform(lo, hi, 50):
        theta = grad_a_inv(model, x)
        assert natural_domain_contains(model, theta)
        assert grad_a(model, theta) == pytest.approx(x, rel=1e-10)
        assert dstar(model, x) == pytest.approx(x * theta - log_partition(model, theta), rel=1e-9, abs=1e-10)


def test_meanvar_conjugate_identity():
    model = get_model("meanvar")
    rng = np.random.default_rng(3)
    for _ in range(50):
        u = rng.normal()
        v = u ** 2 + rng.uniform(0.1, 4.0)
        theta = grad_a_inv(model, [u, v])
        assert theta[1] < 0
        assert_allclose(grad_a(model, theta), [u, v], rtol=1e-10)
        assert dstar(model, [u, v]) == pytest.approx(float(np.dot([u, v], theta)) - log_partition(model, theta))
        assert dstar(model, [u, v]) == pytest.approx(-0.5 * (1.0 + np.log(v - u ** 2)))


def test_dstar_values():
    assert dstar(get_model("gauss"), 2.0) == pytest.approx(2.0)
    assert dstar(get_model("poisson"), 1.0) == pytest.approx(-1.0)
    assert dstar(get_model("bernoulli"), 0.5) == pytest.approx(np.log(0.5))


def test_dstar_domain_checks():
    poisson = get_model("poisson")
    with pytest.raises(DomainError) as info:
        dstar(poisson, 0.0)
    assert info.value.bound == 0.0
    assert dstar(poisson, 0.0, allow_boundary=True) == 0.0
    with pytest.raises(DomainError):
        dstar(get_model("bernoulli"), 1.5)
    with pytest.raises(DomainError):
        dstar(get_model("meanvar"), [1.0, 0.5])


def test_natural_domain():
    assert natural_domain_contains(get_model("poisson"), 3.0)
    assert not natural_domain_contains(get_model("exponential"), 0.5)
    assert natural_domain_contains(get_model("exponential"), -0.5)
    with pytest.raises(DomainError):
        grad_a(get_model("variance"), 1.0)


def test_in_mean_domain_open_and_closed():
    model = get_model("poisson")
    x = np.array([[0.0], [1.0], [-1.0]])
    assert in_mean_domain(model, x).tolist() == [False, True, False]
    assert in_mean_domain(model, x, closed=True).tolist() == [True, True, False]


def test_segment_cost_min():
    gauss = get_model("gauss")
    assert segment_cost_min(gauss, 1.0 / 3.0, 3) == pytest.approx(-1.0 / 6.0)
    assert segment_cost_min(get_model("poisson"), 0.0, 4) == 0.0
    with pytest.raises(DegenerateSegment):
        segment_cost_min(get_model("exponential"), 0.0, 2)
    with pytest.raises(DegenerateSegment):
        segment_cost_min(get_model("variance"), 0.0, 2)
    with pytest.raises(DomainError):
        segment_cost_min(gauss, 1.0, 0)


def test_segment_costs_batches_and_marks_divergence():
    model = get_model("exponential")
    means = np.array([[1.0], [0.0], [2.0]])
    costs = segment_costs(model, means, np.array([2, 3, 4]))
    assert costs[0] == pytest.approx(-2.0 * (-1.0))
    assert np.isposinf(costs[1])
    assert costs[2] == pytest.approx(-4.0 * (-np.log(2.0) - 1.0))


def test_sufficient_stats_shapes():
    data = np.array([1.0, 2.0])
    assert_allclose(sufficient_stats(get_model("variance"), data), [[1.0], [4.0]])
    assert_allclose(sufficient_stats(get_model("meanvar"), data), [[1.0, 1.0], [2.0, 4.0]])
    xy = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_allclose(sufficient_stats(get_model("quadratic-regression"), xy),
                    [[1.0, 1.0, 2.0, 2.0, 4.0], [9.0, 3.0, 12.0, 4.0, 16.0]])
    with pytest.raises(ConfigError):
        sufficient_stats(get_model("gauss", components=2), data)


def test_prepare_series_normalises_counts():
    model = get_model("binomial", trials=4)
    assert_allclose(prepare_series(model, [0, 2, 4]).ravel(), [0.0, 0.5, 1.0])
    with pytest.raises(DomainError, match="row 1"):
        prepare_series(model, [5])


def test_prepare_series_rejects_bad_values():
    with pytest.raises(DomainError):
        prepare_series(get_model("poisson"), [1.0, -1.0])
    with pytest.raises(DomainError):
        prepare_series(get_model("gauss"), [1.0, np.nan])
    with pytest.raises(ConfigError):
        prepare_series(get_model("gauss"), np.empty(0))


def test_standardise_removes_scale():
    rng = np.random.default_rng(11)
    data = rng.normal(0.0, 1.0, 300)
    model = get_model("gauss")
    assert_allclose(prepare_series(model, 5.0 * data, standardise=True),
                    prepare_series(model, data, standardise=True), rtol=1e-12)


def test_regression_minimum_on_exact_line():
    model = get_model("quadratic-regression")
    x = np.array([0.0, 1.0, 2.0])
    stats = sufficient_stats(model, np.column_stack([x, 2.0 * x + 1.0]))
    assert abs(segment_cost_min(model, stats.mean(axis=0), 3)) < 1e-9
    # a single point is fitted exactly
    assert abs(segment_cost_min(model, stats[1], 1)) < 1e-9


def test_quadratic_coeffs_require_strict_convexity():
    with pytest.raises(ValidationError):
        QuadraticCoeffs(A=1.0, B=2.0, C=1.0)
    # a one-point fit whose AC − B² is rounding noise
    with pytest.raises(ValidationError):
        QuadraticCoeffs(A=4.0, B=2.0 * (1.0 - 1e-13), C=1.0)


def test_nearly_flat_lagrangian_has_no_dual_value():
    flat = np.array([4.0, 2.0 * (1.0 - 1e-13), 1.0, -2.0, -1.0, 1.0])
    other = np.array([5.0, 3.0, 2.0, -3.0, -2.0, 3.0])
    assert 4.0 * 1.0 - flat[1] ** 2 > 0
    assert not quadratic_convex(flat)
    assert np.isneginf(quadratic_dual_arrays(flat, other, np.array(0.0)))
    assert quadratic_convex(np.array([[1.0, 0.0, 1.0], [4.0, 1.0, 1.0]])).tolist() == [True, True]


def test_quadratic_dual_at_zero_is_minimum():
    f_s = QuadraticCoeffs(A=1.0, B=0.0, C=1.0, D=-1.0)
    f_r = QuadraticCoeffs(A=2.0, B=0.0, C=2.0)
    assert quadratic_dual(f_s, f_r, 0.0) == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        quadratic_dual(f_s, f_r, 1.5)
    with pytest.raises(DomainError):
        quadratic_dual(f_s, f_r, -0.1)


def test_quadratic_mu_max():
    f_s = QuadraticCoeffs(A=1.0, B=0.0, C=1.0)
    assert quadratic_mu_max(f_s, QuadraticCoeffs(A=2.0, B=0.0, C=2.0)) == pytest.approx(1.0)
    assert np.isinf(quadratic_mu_max(f_s, QuadraticCoeffs(A=0.5, B=0.0, C=0.5)))
    with pytest.raises(TieBreakUnsupported):
        quadratic_mu_max(f_s, f_s)


def test_regression_coeffs_layout():
    coeffs = regression_coeffs([5.0, 3.0, 7.0, 2.0, 9.0], 3, offset=1.5)
    assert coeffs.as_array().tolist() == [5.0, 3.0, 3.0, -7.0, -2.0, 10.5]


def test_model_ids_cover_cli_names():
    assert {m.value for m in ModelId} >= {"gauss", "meanvar", "quadratic-regression"}
