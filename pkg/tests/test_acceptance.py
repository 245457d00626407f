"""Acceptance gate for the frozen reference results.

One test per criterion. Each prints a single CRITERION line so that
`pytest tests/test_acceptance.py -v -s` reads as a scorecard. The
tolerances are contracts: do not loosen them to make a run pass.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import multinomial, poisson

from ascertain import (
    ContingencyTable,
    FitSpec,
    RaschParams,
    SimConfig,
    backend,
    bias_study,
    bootstrap_null,
    cell_probabilities,
    complete_loglik,
    complete_tables,
    decide,
    estimator_study,
    fit,
    fit_loglinear,
    lincoln_petersen,
    missing_cell,
    observed_loglik,
    profile_gamma,
    re_complete_loglik,
    re_observed_loglik,
    select_model,
)
from ascertain.likelihood import RandomEffectsParams
from ascertain.rasch import n_pairs
from ascertain.threesided import NullDistribution, delta_thresholds
from ascertain.loglinear import term_name

# ---------------------------------------------------------------- helpers


def _finish(num, label, failures):
    status = "PASS" if not failures else "FAIL"
    detail = "" if not failures else " -- " + "; ".join(failures[:8])
    print(f"\nCRITERION {num} ({label}): {status}{detail}")
    assert not failures, f"criterion {num} ({label}): " + "; ".join(failures)


def _expect(failures, name, got, want, tol):
    got = float(got)
    if not (abs(got - want) <= tol):
        failures.append(f"{name}: got {got:.6g}, want {want} +/- {tol}")


def _expect_in(failures, name, got, lo, hi):
    got = float(got)
    if not (lo <= got <= hi):
        failures.append(f"{name}: got {got:.6g}, outside [{lo}, {hi}]")


def _expect_true(failures, name, cond):
    if not cond:
        failures.append(name)


# reference estimates for the bundled surveillance data (incomplete pair)
REF_FREE = {
    "alpha": (-0.099, 0.059, -0.961),
    "pairs": (0.830, 1.062, 2.224),
    "gamma": (626.0, 506.0),
    "theta": -0.020,
    "ratio": 1.237,
}
REF_NULL = {
    "alpha": (-0.110, 0.048, -0.972),
    "pairs": (0.830, 1.061, 2.225),
    "gamma": (625.0, 508.0),
}
# cell probabilities at the free estimates (exposed at theta-hat, unexposed)
REF_PROBS_E = {
    "111": 0.301, "110": 0.030, "101": 0.072, "011": 0.209,
    "100": 0.067, "010": 0.060, "001": 0.071, "000": 0.189,
}
REF_PROBS_U = {
    "111": 0.307, "110": 0.030, "101": 0.073, "011": 0.211,
    "100": 0.066, "010": 0.060, "001": 0.070, "000": 0.184,
}
# bootstrap null quantiles (alpha/2, alpha, 1-alpha, 1-alpha/2) and the
# delta thresholds they imply, per sampling regime
REF_BOOT_INCOMPLETE = {
    "quantiles": (-0.2292, -0.1913, 0.1788, 0.2083),
    "deltas": (0.1713, 0.1988),
}
REF_BOOT_COMPLETE = {
    "quantiles": (-0.1547, -0.1315, 0.1263, 0.1535),
    "deltas": (0.0945, 0.1633),
}
# completion pipeline and fits on the completed pair
REF_COMPLETE_FREE = {
    "alpha": (0.023, 0.315, -0.667),
    "pairs": (0.584, 0.874, 2.012),
    "theta": -0.037,
}
REF_COMPLETE_NULL = {
    "alpha": (0.002, 0.294, -0.688),
    "pairs": (0.584, 0.873, 2.013),
}
# random-effects fits should collapse onto the fixed-effect estimates
REF_RE_COMPLETE = {
    "alpha": (0.023, 0.315, -0.667),
    "pairs": (0.585, 0.874, 2.012),
    "mu": -0.038,
}
REF_RE_INCOMPLETE = {
    "alpha": (-0.099, 0.059, -0.961),
    "pairs": (0.830, 1.062, 2.224),
    "gamma": (626.0, 506.0),
    "mu": -0.020,
}
# estimator recovery intervals for the two-group design with three lists
REF_RECOVERY = {
    -1.0: {
        "alpha_1": (0.36, 0.64), "alpha_2": (0.26, 0.72), "alpha_3": (0.21, 0.85),
        "pair_1_2": (-0.48, 0.11), "pair_1_3": (-0.53, 0.08), "pair_2_3": (-0.45, -0.02),
        "gamma_E": (436.0, 554.0), "gamma_U": (934.0, 1075.0), "theta": (-1.21, -0.82),
    },
    1.0: {
        "alpha_1": (0.35, 0.61), "alpha_2": (0.23, 0.74), "alpha_3": (0.20, 0.79),
        "pair_1_2": (-0.47, 0.09), "pair_1_3": (-0.44, 0.04), "pair_2_3": (-0.46, 0.05),
        "gamma_E": (458.0, 548.0), "gamma_U": (942.0, 1063.0), "theta": (0.84, 1.15),
    },
}
# observed-ratio bias grid (unexposed-shift convention)
REF_BIAS = {
    3: (0.625, 0.541, 0.501, 0.483, 0.477),
    5: (0.548, 0.513, 0.500, 0.497, 0.497),
}
BIAS_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)


@pytest.fixture(scope="module")
def warm_backend(nvdrs_pair):
    # compile every kernel path before anything is timed
    t_E, t_U = nvdrs_pair
    fit(t_E, t_U, FitSpec(variant="incomplete-free-theta", multistart=1))
    return True


@pytest.fixture(scope="module")
def free_fit(nvdrs_pair, warm_backend):
    t_E, t_U = nvdrs_pair
    return fit(t_E, t_U, FitSpec(variant="incomplete-free-theta"))


@pytest.fixture(scope="module")
def complete_free_fit(nvdrs_completed_pair):
    c_E, c_U = nvdrs_completed_pair
    return fit(c_E, c_U, FitSpec(variant="complete-free-theta"))


def sim_config(**over):
    base = dict(
        J=[3],
        gamma_E=500.0,
        gamma_U=1000.0,
        alpha=0.5,
        alpha2=-0.2,
        theta_grid=[-1.0, 1.0],
        B=200,
        seed=0,
        theta_applies_to="exposed",
    )
    base.update(over)
    return SimConfig(**base)


# ---------------------------------------------------------------- criteria


def test_criterion_1_free_fit(nvdrs_pair, warm_backend):
    t_E, t_U = nvdrs_pair
    start = time.perf_counter()
    res = fit(t_E, t_U, FitSpec(variant="incomplete-free-theta"))
    elapsed = time.perf_counter() - start
    failures = []
    _expect_true(failures, "fit did not converge", res.converged)
    for j, want in enumerate(REF_FREE["alpha"]):
        _expect(failures, f"alpha_{j + 1}", res.params.alpha[j], want, 0.01)
    for k, want in enumerate(REF_FREE["pairs"]):
        _expect(failures, f"pair_{k}", res.params.alpha2[k], want, 0.01)
    _expect(failures, "gamma_E", res.rates.gamma_E, REF_FREE["gamma"][0], 1.0)
    _expect(failures, "gamma_U", res.rates.gamma_U, REF_FREE["gamma"][1], 1.0)
    _expect(failures, "theta", res.params.theta, REF_FREE["theta"], 0.005)
    _expect(failures, "ratio", res.derived["ratio"], REF_FREE["ratio"], 0.005)
    _expect_true(failures, f"runtime {elapsed:.2f}s >= 5s", elapsed < 5.0)
    _finish(1, "free fit on bundled pair", failures)


def test_criterion_2_null_fit(nvdrs_pair, warm_backend):
    t_E, t_U = nvdrs_pair
    res = fit(t_E, t_U, FitSpec(variant="incomplete-null-theta"))
    failures = []
    _expect_true(failures, "fit did not converge", res.converged)
    _expect_true(failures, "theta not pinned at zero", res.params.theta == 0.0)
    for j, want in enumerate(REF_NULL["alpha"]):
        _expect(failures, f"alpha_{j + 1}", res.params.alpha[j], want, 0.01)
    for k, want in enumerate(REF_NULL["pairs"]):
        _expect(failures, f"pair_{k}", res.params.alpha2[k], want, 0.01)
    _expect(failures, "gamma_E", res.rates.gamma_E, REF_NULL["gamma"][0], 1.0)
    _expect(failures, "gamma_U", res.rates.gamma_U, REF_NULL["gamma"][1], 1.0)
    _finish(2, "null fit on bundled pair", failures)


def test_criterion_3_probability_table(free_fit):
    from ascertain.tables import pattern_bits

    p_E = cell_probabilities(free_fit.params, free_fit.params.theta)
    p_U = cell_probabilities(free_fit.params, 0.0)
    bits = pattern_bits(3)
    failures = []
    for c in range(8):
        pat = "".join(str(int(b)) for b in bits[c])
        _expect(failures, f"p_E[{pat}]", p_E[c], REF_PROBS_E[pat], 0.002)
        _expect(failures, f"p_U[{pat}]", p_U[c], REF_PROBS_U[pat], 0.002)
    _finish(3, "all 16 cell probabilities", failures)


def _seed_averaged_bootstrap(pair, regime, theta_hat):
    quantiles = np.zeros(4)
    deltas = np.zeros(2)
    seeds = (0, 1, 2)
    for seed in seeds:
        dist = bootstrap_null(pair[0], pair[1], regime=regime, B=1500, seed=seed)
        quantiles += [
            dist.quantile(0.025),
            dist.quantile(0.05),
            dist.quantile(0.95),
            dist.quantile(0.975),
        ]
        deltas += delta_thresholds(theta_hat, dist)
    return quantiles / len(seeds), deltas / len(seeds)


def test_criterion_4_bootstrap_quantiles(
    nvdrs_pair, nvdrs_completed_pair, free_fit, complete_free_fit
):
    start = time.perf_counter()
    failures = []
    for label, pair, theta_hat, ref in (
        ("incomplete", nvdrs_pair, free_fit.params.theta, REF_BOOT_INCOMPLETE),
        (
            "complete",
            nvdrs_completed_pair,
            complete_free_fit.params.theta,
            REF_BOOT_COMPLETE,
        ),
    ):
        q, d = _seed_averaged_bootstrap(pair, label, theta_hat)
        for name, got, want in zip(
            ("q_alpha_half", "q_alpha", "q_one_minus_alpha", "q_one_minus_alpha_half"),
            q,
            ref["quantiles"],
        ):
            _expect(failures, f"{label} {name}", got, want, 0.03)
        _expect(failures, f"{label} delta1", d[0], ref["deltas"][0], 0.03)
        _expect(failures, f"{label} delta2", d[1], ref["deltas"][1], 0.03)
    elapsed = time.perf_counter() - start
    _expect_true(failures, f"runtime {elapsed:.0f}s >= 600s", elapsed < 600.0)
    _finish(4, "seed-averaged bootstrap quantiles", failures)


def test_criterion_5_completion_pipeline(nvdrs_pair, warm_backend):
    failures = []
    report = select_model(nvdrs_pair)
    names = [term_name(t) for t in report.selected.terms]
    _expect_true(
        failures, f"selected {names}, want first-pair interaction dropped",
        names == ["1-3", "2-3"],
    )
    completed, raw = complete_tables(nvdrs_pair, report.selected.stats)
    _expect_true(failures, f"missing cells {completed[0].counts[0]:.0f}/{completed[1].counts[0]:.0f}",
                 completed[0].counts[0] == 85.0 and completed[1].counts[0] == 63.0)
    _expect_true(failures, "completed totals", completed[0].counts.sum() == 593.0
                 and completed[1].counts.sum() == 476.0)
    _expect(failures, "completed ratio", 593.0 / 476.0, 1.246, 0.001)

    free = fit(completed[0], completed[1], FitSpec(variant="complete-free-theta"))
    for j, want in enumerate(REF_COMPLETE_FREE["alpha"]):
        _expect(failures, f"free alpha_{j + 1}", free.params.alpha[j], want, 0.01)
    for k, want in enumerate(REF_COMPLETE_FREE["pairs"]):
        _expect(failures, f"free pair_{k}", free.params.alpha2[k], want, 0.01)
    _expect(failures, "free theta", free.params.theta, REF_COMPLETE_FREE["theta"], 0.01)

    null = fit(completed[0], completed[1], FitSpec(variant="complete-null-theta"))
    for j, want in enumerate(REF_COMPLETE_NULL["alpha"]):
        _expect(failures, f"null alpha_{j + 1}", null.params.alpha[j], want, 0.01)
    for k, want in enumerate(REF_COMPLETE_NULL["pairs"]):
        _expect(failures, f"null pair_{k}", null.params.alpha2[k], want, 0.01)

    saturated = select_model(nvdrs_pair, exclude_saturated=False)
    sat_completed, _ = complete_tables(nvdrs_pair, saturated.selected.stats)
    _expect_true(failures, "saturated missing cells",
                 sat_completed[0].counts[0] == 126.0 and sat_completed[1].counts[0] == 84.0)
    _finish(5, "capture-recapture completion", failures)


def test_criterion_6_random_effects_collapse(nvdrs_pair, nvdrs_completed_pair, warm_backend):
    failures = []
    c_E, c_U = nvdrs_completed_pair
    rec = fit(c_E, c_U, FitSpec(variant="re-complete"))
    for j, want in enumerate(REF_RE_COMPLETE["alpha"]):
        _expect(failures, f"complete alpha_{j + 1}", rec.params.alpha[j], want, 0.01)
    for k, want in enumerate(REF_RE_COMPLETE["pairs"]):
        _expect(failures, f"complete pair_{k}", rec.params.alpha2[k], want, 0.01)
    _expect(failures, "complete mu", rec.re_params.mu, REF_RE_COMPLETE["mu"], 0.01)
    _expect_true(failures, f"complete sigma {rec.re_params.sigma:.2g} >= 0.01",
                 rec.re_params.sigma < 0.01)

    t_E, t_U = nvdrs_pair
    rei = fit(t_E, t_U, FitSpec(variant="re-incomplete"))
    for j, want in enumerate(REF_RE_INCOMPLETE["alpha"]):
        _expect(failures, f"incomplete alpha_{j + 1}", rei.params.alpha[j], want, 0.01)
    for k, want in enumerate(REF_RE_INCOMPLETE["pairs"]):
        _expect(failures, f"incomplete pair_{k}", rei.params.alpha2[k], want, 0.01)
    _expect(failures, "incomplete gamma_E", rei.rates.gamma_E, REF_RE_INCOMPLETE["gamma"][0], 1.0)
    _expect(failures, "incomplete gamma_U", rei.rates.gamma_U, REF_RE_INCOMPLETE["gamma"][1], 1.0)
    _expect(failures, "incomplete mu", rei.re_params.mu, REF_RE_INCOMPLETE["mu"], 0.01)
    _expect_true(failures, f"incomplete sigma {rei.re_params.sigma:.2g} >= 0.01",
                 rei.re_params.sigma < 0.01)
    _finish(6, "random-effects fits collapse to fixed effects", failures)


def test_criterion_7_estimator_recovery(warm_backend):
    start = time.perf_counter()
    rows = estimator_study(sim_config())
    failures = []
    for row in rows:
        lo, hi = REF_RECOVERY[row.theta][row.statistic]
        _expect_in(failures, f"theta={row.theta} {row.statistic} mean", row.mean, lo, hi)
    elapsed = time.perf_counter() - start
    _expect_true(failures, f"runtime {elapsed:.0f}s >= 900s", elapsed < 900.0)
    _finish(7, "estimator recovery study", failures)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def _analytic_observed_ratio(config, J, theta):
    shift_E, shift_U = config.shifts(theta)
    p0_E = (1.0 - _sigmoid(config.alpha + shift_E)) ** J
    p0_U = (1.0 - _sigmoid(config.alpha + shift_U)) ** J
    return config.gamma_E * (1.0 - p0_E) / (config.gamma_U * (1.0 - p0_U))


def test_criterion_8_bias_grid(warm_backend):
    failures = []
    cfg = sim_config(
        J=[3, 5], theta_grid=BIAS_GRID, B=1000, theta_applies_to="unexposed"
    )
    rows = bias_study(cfg)
    for row in rows:
        want = REF_BIAS[row.J][BIAS_GRID.index(row.theta)]
        _expect(failures, f"unexposed J={row.J} theta={row.theta}", row.mean, want, 0.01)

    # exposed-shift convention: compare against the closed-form ratio
    exp_cfg = sim_config(J=[3], theta_grid=BIAS_GRID, B=1000)
    for row in bias_study(exp_cfg):
        want = _analytic_observed_ratio(exp_cfg, 3, row.theta)
        _expect(failures, f"exposed J=3 theta={row.theta}", row.mean, want, 0.01)
    _expect(
        failures,
        "exposed J=3 theta=1 analytic point",
        _analytic_observed_ratio(exp_cfg, 3, 1.0),
        0.525,
        0.01,
    )

    # a single list has no repeat-capture information; its row is pinned
    # by the analytic value alone
    one_cfg = sim_config(J=[1], theta_grid=BIAS_GRID, B=1000, theta_applies_to="unexposed")
    for row in bias_study(one_cfg):
        want = _analytic_observed_ratio(one_cfg, 1, row.theta)
        _expect(failures, f"single-list theta={row.theta}", row.mean, want, 0.01)
    _finish(8, "observed-ratio bias grid", failures)


# ------------------------------------------------- criterion 9: properties


def _random_params(rng, J, scale=1.0):
    return RaschParams(
        alpha=rng.normal(0, scale, size=J),
        alpha2=rng.normal(0, scale, size=n_pairs(J)),
        theta=float(rng.normal(0, scale)),
        model="dynamic",
    )


def _prop_normalization(rng, failures):
    for _ in range(40):
        J = int(rng.integers(1, 7))
        params = _random_params(rng, J, scale=2.0)
        p = cell_probabilities(params, float(rng.normal()))
        if abs(p.sum() - 1.0) > 1e-12:
            failures.append(f"normalization off by {abs(p.sum() - 1.0):.2e}")
            return


def _prop_gradients(rng, failures):
    kern = backend.active()
    from ascertain.tables import pattern_bits

    for J in (1, 2, 3):
        bits = pattern_bits(J)
        params = _random_params(rng, J, scale=0.8)
        counts = rng.integers(1, 80, size=1 << J).astype(float)
        inc = counts.copy()
        inc[0] = 0.0
        x0 = np.concatenate([params.alpha, params.alpha2, [params.theta]])

        def split(x):
            return x[:J], x[J:-1], x[-1]

        for fn, use_counts in (("incomplete_ll_grad", inc), ("complete_ll_grad", counts)):
            def value(x):
                a, p2, th = split(x)
                return getattr(kern, fn)(bits, use_counts, a, p2, th)[0]

            grad = getattr(kern, fn)(bits, use_counts, *split(x0))[1]
            h = 1e-5
            for m in range(x0.size):
                xp, xm = x0.copy(), x0.copy()
                xp[m] += h
                xm[m] -= h
                fd = (value(xp) - value(xm)) / (2 * h)
                rel = abs(grad[m] - fd) / max(1.0, abs(fd))
                if rel > 1e-5:
                    failures.append(f"{fn} J={J} coord {m} grad rel err {rel:.2e}")
                    return


def _series_observed_loglik(table, gamma, params, shift):
    p = cell_probabilities(params, shift)
    n_obs = int(table.counts.sum())
    n0_max = int(gamma * p[0] + 30 * math.sqrt(gamma)) + 200
    terms = []
    for n0 in range(n0_max):
        counts = table.counts.copy()
        counts[0] = n0
        terms.append(
            poisson.logpmf(n_obs + n0, gamma)
            + multinomial.logpmf(counts, n_obs + n0, p)
        )
    return float(logsumexp(terms))


def _prop_poissonization(rng, failures):
    for J in (2, 3):
        params = _random_params(rng, J, scale=0.6)
        counts = rng.integers(1, 40, size=1 << J).astype(float)
        counts[0] = 0.0
        table = ContingencyTable(J=J, counts=counts, complete=False)
        gamma = float(counts.sum() * rng.uniform(1.1, 1.5))
        shift = float(rng.normal(0, 0.5))
        want = _series_observed_loglik(table, gamma, params, shift)
        got = observed_loglik(table, gamma, params, shift)
        if abs(got - want) > 1e-10:
            failures.append(f"poissonization J={J} diff {abs(got - want):.2e}")
            return


def _prop_profile_gamma(rng, failures):
    for J in (2, 3):
        params = _random_params(rng, J, scale=0.6)
        counts = rng.integers(1, 60, size=1 << J).astype(float)
        counts[0] = 0.0
        table = ContingencyTable(J=J, counts=counts, complete=False)
        shift = float(rng.normal(0, 0.5))
        g_hat = profile_gamma(table, params, shift)

        def slope(g, h=1e-4):
            return (
                observed_loglik(table, g + h, params, shift)
                - observed_loglik(table, g - h, params, shift)
            ) / (2 * h)

        root = brentq(slope, counts.sum() * 0.9, counts.sum() * 4.0, xtol=1e-10)
        if abs(g_hat - root) > 1e-8 * abs(root):
            failures.append(f"profile gamma J={J} rel err {abs(g_hat - root) / root:.2e}")
            return


def _prop_partition(rng, failures):
    total = 0
    while total < 100_000:
        draws = rng.normal(size=int(rng.integers(2, 40)))
        dist = NullDistribution(
            draws=draws, seed=0, regime="incomplete", B=draws.size,
            n_failed=0, null_loglik=0.0,
        )
        alpha = float(rng.uniform(0.01, 0.3))
        for _ in range(1000):
            theta = float(rng.normal(0, 2.0))
            delta = float(rng.exponential(1.0))
            out = decide(theta, dist, alpha=alpha, delta=delta)
            if out.reject_null and out.reject_plus == out.reject_minus:
                failures.append(
                    f"partition violated at theta={theta:.3f} delta={delta:.3f}"
                )
                return
            total += 1


def _prop_lincoln_petersen(rng, failures):
    for _ in range(200):
        counts = np.zeros(4)
        counts[1:] = rng.integers(5, 500, size=3).astype(float)
        table = ContingencyTable(J=2, counts=counts, complete=False)
        model = fit_loglinear(table, ())
        lp = lincoln_petersen(M11=counts[3], M10=counts[2], M01=counts[1])
        got = missing_cell(model) + counts[1:].sum()
        if abs(got - lp) > 1e-6 * lp:
            failures.append(f"two-list identity rel err {abs(got - lp) / lp:.2e}")
            return


def _simpson_marginal(loglik_at, mu, sigma, half_width=12.0, n=40001):
    t = np.linspace(-half_width, half_width, n)
    logphi = -0.5 * t**2 - 0.5 * math.log(2 * math.pi)
    logf = np.array([loglik_at(mu + sigma * tt) for tt in t]) + logphi
    m = logf.max()
    return float(m + np.log(simpson(np.exp(logf - m), x=t)))


def _prop_quadrature(rng, failures):
    # small tables keep the integrand wide enough for the fixed rule to
    # resolve; the convergence guard rejects sharper regimes by design
    params = _random_params(rng, 3, scale=0.6)
    re = RandomEffectsParams(mu=0.2, sigma=0.25)
    counts = rng.integers(1, 12, size=8).astype(float)
    table = ContingencyTable(J=3, counts=counts, complete=True)
    want = _simpson_marginal(lambda s: complete_loglik(table, params, s), re.mu, re.sigma)
    got = re_complete_loglik(table, params, re, exposed=True)
    if abs(got - want) > 1e-8:
        failures.append(f"complete quadrature diff {abs(got - want):.2e}")
        return
    inc = counts.copy()
    inc[0] = 0.0
    obs = ContingencyTable(J=3, counts=inc, complete=False)
    gamma = float(inc.sum() * 1.3)
    want = _simpson_marginal(lambda s: observed_loglik(obs, gamma, params, s), re.mu, re.sigma)
    got = re_observed_loglik(obs, gamma, params, re, exposed=True)
    if abs(got - want) > 1e-8:
        failures.append(f"observed quadrature diff {abs(got - want):.2e}")


def test_criterion_9_property_suite(warm_backend):
    failures = []
    rng = np.random.default_rng(20260814)
    _prop_normalization(rng, failures)
    _prop_gradients(rng, failures)
    _prop_poissonization(rng, failures)
    _prop_profile_gamma(rng, failures)
    _prop_partition(rng, failures)
    _prop_lincoln_petersen(rng, failures)
    _prop_quadrature(rng, failures)
    _finish(9, "property suite", failures)
