import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ascertain import (
    FitSpec,
    NumericalError,
    ValidationError,
    bootstrap_null,
    decide,
    delta_thresholds,
    fit,
)
from ascertain import threesided
from ascertain.threesided import NullDistribution


def make_dist(draws, regime="incomplete"):
    draws = np.asarray(draws, dtype=float)
    return NullDistribution(
        draws=draws, seed=0, regime=regime, B=len(draws), n_failed=0, null_loglik=0.0
    )


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=400, deadline=None)
@given(
    draws=st.lists(finite, min_size=2, max_size=60),
    theta=finite,
    delta=st.floats(0, 30),
    alpha=st.floats(0.01, 0.4),
)
def test_partition_property(draws, theta, delta, alpha):
    out = decide(theta, make_dist(draws), alpha=alpha, delta=delta)
    if out.reject_null:
        # the estimate clears the band on exactly one side
        assert out.reject_plus != out.reject_minus
    # equivalence needs both one-sided rejections; both cannot coexist
    # with a null rejection
    if out.reject_plus and out.reject_minus:
        assert not out.reject_null


def test_partition_property_bulk(rng):
    # dense random sweep of the same invariant
    n = 20_000
    for _ in range(n // 2000):
        dist = make_dist(rng.normal(size=rng.integers(2, 25)))
        for theta, delta in zip(
            rng.normal(scale=3, size=2000), rng.exponential(size=2000)
        ):
            out = decide(theta, dist, delta=delta)
            assert out.reject_plus != out.reject_minus or not out.reject_null


def test_rejections_monotone_in_delta(rng):
    dist = make_dist(rng.normal(size=50))
    theta = 0.4
    prev = decide(theta, dist, delta=0.0)
    for delta in np.linspace(0.01, 3.0, 40):
        cur = decide(theta, dist, delta=float(delta))
        # one-sided rejections only switch on as the band widens
        assert cur.reject_plus >= prev.reject_plus
        assert cur.reject_minus >= prev.reject_minus
        # the null rejection only switches off
        assert cur.reject_null <= prev.reject_null
        prev = cur


def test_delta_thresholds_are_boundaries(rng):
    dist = make_dist(rng.normal(size=200))
    theta = 0.3
    d1, d2 = delta_thresholds(theta, dist)
    assert d1 == pytest.approx(theta - dist.quantile(0.05))
    assert d2 == pytest.approx(dist.quantile(0.95) - theta)
    eps = 1e-9
    if d1 > 0:
        assert not decide(theta, dist, delta=d1 - eps).reject_plus
        assert decide(theta, dist, delta=d1 + eps).reject_plus
    if d2 > 0:
        assert not decide(theta, dist, delta=d2 - eps).reject_minus
        assert decide(theta, dist, delta=d2 + eps).reject_minus


def test_quantile_uses_linear_interpolation(rng):
    draws = rng.normal(size=17)
    dist = make_dist(draws)
    for p in (0.025, 0.05, 0.5, 0.95, 0.975):
        assert dist.quantile(p) == float(np.quantile(draws, p))


def test_single_draw_distribution():
    dist = make_dist([0.7])
    assert dist.quantile(0.05) == 0.7
    out = decide(0.7, dist, delta=0.0)
    assert not out.reject_null


def test_decide_validation(rng):
    dist = make_dist(rng.normal(size=10))
    with pytest.raises(ValidationError):
        decide(0.0, dist, alpha=0.0)
    with pytest.raises(ValidationError):
        decide(0.0, dist, alpha=1.0)
    with pytest.raises(ValidationError):
        decide(0.0, dist, delta=-0.1)


def test_interpretation_branches(rng):
    dist = make_dist(np.linspace(-1, 1, 101))
    assert "rejected" in decide(5.0, dist, delta=0.1).interpretation
    assert "within" in decide(0.0, dist, delta=2.0).interpretation
    assert "no hypothesis" in decide(0.9, dist, delta=0.0).interpretation


def test_bootstrap_null_validation(nvdrs_pair):
    t_E, t_U = nvdrs_pair
    with pytest.raises(ValidationError):
        bootstrap_null(t_E, t_U, regime="weird")
    with pytest.raises(ValidationError):
        bootstrap_null(t_E, t_U, regime="incomplete", B=0)


def test_bootstrap_null_deterministic(nvdrs_pair):
    t_E, t_U = nvdrs_pair
    a = bootstrap_null(t_E, t_U, regime="incomplete", B=10, seed=4)
    b = bootstrap_null(t_E, t_U, regime="incomplete", B=10, seed=4)
    assert np.array_equal(a.draws, b.draws)
    c = bootstrap_null(t_E, t_U, regime="incomplete", B=10, seed=5)
    assert not np.array_equal(a.draws, c.draws)


def test_bootstrap_null_smoke(nvdrs_pair):
    t_E, t_U = nvdrs_pair
    dist = bootstrap_null(t_E, t_U, regime="incomplete", B=40, seed=1)
    assert dist.n_failed == 0
    assert len(dist.draws) == 40
    assert abs(float(dist.draws.mean())) < 0.15  # centered near no shift
    assert dist.null_loglik == pytest.approx(-40.945919, abs=1e-5)


def test_bootstrap_failure_threshold(nvdrs_pair, monkeypatch):
    t_E, t_U = nvdrs_pair
    monkeypatch.setattr(threesided, "_replicate", lambda args: None)
    with pytest.raises(NumericalError, match="failed"):
        bootstrap_null(t_E, t_U, regime="incomplete", B=10, seed=0)


def test_bootstrap_free_fit_consistency(nvdrs_pair):
    # the tested statistic is the free-shift estimate on the real data
    t_E, t_U = nvdrs_pair
    free = fit(t_E, t_U, FitSpec(variant="incomplete-free-theta"))
    dist = bootstrap_null(t_E, t_U, regime="incomplete", B=25, seed=2)
    out = decide(free.params.theta, dist)
    assert out.theta_hat == free.params.theta
    assert out.delta1 == pytest.approx(free.params.theta - dist.quantile(0.05))
