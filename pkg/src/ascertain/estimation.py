"""Maximum-likelihood fitting of all model variants.

One optimizer contract serves every variant: quasi-Newton ascent on an
unconstrained working vector (gamma profiled out in closed form where the
model allows it, log scale where it does not; sigma on a log scale with a
floor), multistart from jittered moment-based starts, then a Newton polish
until the gradient sup-norm passes the certificate.
"""

import dataclasses
import math

import numpy as np
from scipy.optimize import minimize

from . import backend, likelihood
from .errors import FitError, NumericalError, ValidationError
from .likelihood import SIGMA_FLOOR, RandomEffectsParams
from .rasch import PoissonRates, RaschParams, miss_probability, n_pairs
from .tables import pattern_bits

VARIANTS = (
    "incomplete-free-theta",
    "incomplete-null-theta",
    "complete-free-theta",
    "complete-null-theta",
    "re-complete",
    "re-incomplete",
)

_ALPHA_PIN = -20.0  # strength assigned to a list that never captures anyone


@dataclasses.dataclass(frozen=True)
class FitSpec:
    """Which likelihood to maximize and how hard to try."""

    variant: str
    model: str = "dynamic"
    tol_grad: float = 1e-6
    tol_loglik: float = 1e-10
    max_iter: int = 500
    multistart: int = 5
    seed: int = 0
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.model not in ("independent", "dynamic"):
            raise ValidationError(f"unknown model {self.model!r}")
        if self.multistart < 1:
            raise ValidationError("multistart must be at least 1")

    @property
    def complete(self):
        return self.variant in ("complete-free-theta", "complete-null-theta", "re-complete")

    @property
    def random_effects(self):
        return self.variant in ("re-complete", "re-incomplete")

    @property
    def free_theta(self):
        return self.variant in ("incomplete-free-theta", "complete-free-theta")


@dataclasses.dataclass(frozen=True)
class FitResult:
    """A certified local maximizer plus derived quantities."""

    spec: FitSpec
    params: RaschParams
    re_params: RandomEffectsParams | None
    rates: PoissonRates | None
    loglik: float
    converged: bool
    n_restarts_used: int
    grad_norm: float
    not_estimable: tuple = ()
    derived: dict = dataclasses.field(default_factory=dict)

    @property
    def shift_estimate(self):
        """The differential-ascertainment point estimate (theta or mu)."""
        return self.re_params.mu if self.re_params is not None else self.params.theta


class _Problem:
    """Maps the free working vector to parameters and evaluates the joint
    negative log-likelihood for one variant."""

    def __init__(self, table_E, table_U, spec):
        self.spec = spec
        self.table_E = table_E
        self.table_U = table_U
        self.J = table_E.J
        self.bits = pattern_bits(self.J)
        self.kern = backend.active()
        combined = table_E.counts + table_U.counts
        captured = self.bits.T @ combined
        self.dead_lists = tuple(int(j) for j in np.flatnonzero(captured == 0))
        self.free_alpha = [j for j in range(self.J) if j not in self.dead_lists]
        self.np2 = n_pairs(self.J) if spec.model == "dynamic" else 0

        idx = {}
        pos = 0
        for j in self.free_alpha:
            idx[f"alpha_{j}"] = pos
            pos += 1
        if self.np2:
            idx["pairs"] = pos
            pos += self.np2
        if spec.free_theta:
            idx["theta"] = pos
            pos += 1
        if spec.random_effects:
            idx["mu"] = pos
            idx["log_sigma"] = pos + 1
            pos += 2
        if spec.variant == "re-incomplete":
            idx["log_gamma_E"] = pos
            idx["log_gamma_U"] = pos + 1
            pos += 2
        self.index = idx
        self.size = pos
        if spec.random_effects:
            # optimization runs on a fixed dense rule; the doubling-checked
            # evaluation certifies the final value at the maximizer
            self.gh_nodes, self.gh_logw = likelihood.gh_rule(2 * likelihood.GH_NODES)

    def bounds(self):
        if not self.spec.random_effects:
            return None
        out = [(None, None)] * self.size
        out[self.index["log_sigma"]] = (math.log(SIGMA_FLOOR), None)
        return out

    def unpack(self, x):
        alpha = np.full(self.J, _ALPHA_PIN)
        for j in self.free_alpha:
            alpha[j] = x[self.index[f"alpha_{j}"]]
        if self.np2:
            pairs = np.asarray(x[self.index["pairs"]:self.index["pairs"] + self.np2])
        else:
            pairs = np.zeros(n_pairs(self.J))
        theta = float(x[self.index["theta"]]) if "theta" in self.index else 0.0
        return alpha, pairs, theta

    def start(self):
        """Moment-based start: marginal capture logits, no interactions,
        no shift, rates from the profile formula."""
        combined = self.table_E.counts + self.table_U.counts
        captured = self.bits.T @ combined
        frac = np.clip(captured / max(combined.sum(), 1.0), 0.02, 0.98)
        x0 = np.zeros(self.size)
        for j in self.free_alpha:
            x0[self.index[f"alpha_{j}"]] = math.log(frac[j] / (1.0 - frac[j]))
        if self.spec.random_effects:
            x0[self.index["log_sigma"]] = math.log(0.1)
        if "log_gamma_E" in self.index:
            alpha, pairs, _ = self.unpack(x0)
            for key, table in (("log_gamma_E", self.table_E), ("log_gamma_U", self.table_U)):
                logp = self.kern.cell_logprobs(self.bits, alpha, pairs, 0.0)
                gam = table.counts[1:].sum() / (1.0 - math.exp(logp[0]))
                x0[self.index[key]] = math.log(gam)
        return x0

    # ---- fixed-effect objectives: analytic value and gradient

    def _map_grad(self, grad_E, grad_U, out):
        # kernel gradient layout: [alpha(J), pairs(full), theta]
        both = grad_E + grad_U
        for j in self.free_alpha:
            out[self.index[f"alpha_{j}"]] = both[j]
        if self.np2:
            out[self.index["pairs"]:self.index["pairs"] + self.np2] = both[self.J:self.J + self.np2]
        if "theta" in self.index:
            out[self.index["theta"]] = grad_E[-1]  # the unexposed shift is fixed at 0

    def value_grad(self, x):
        alpha, pairs, theta = self.unpack(x)
        if self.spec.complete:
            ll_E, g_E = self.kern.complete_ll_grad(self.bits, self.table_E.counts, alpha, pairs, theta)
            ll_U, g_U = self.kern.complete_ll_grad(self.bits, self.table_U.counts, alpha, pairs, 0.0)
        else:
            ll_E, g_E, _ = self.kern.incomplete_ll_grad(self.bits, self.table_E.counts, alpha, pairs, theta)
            ll_U, g_U, _ = self.kern.incomplete_ll_grad(self.bits, self.table_U.counts, alpha, pairs, 0.0)
        grad = np.zeros(self.size)
        self._map_grad(g_E, g_U, grad)
        return -(ll_E + ll_U), -grad

    # ---- random-effects objective: certified value, finite-difference gradient

    def value_re(self, x):
        alpha, pairs, _ = self.unpack(x)
        mu = float(x[self.index["mu"]])
        sigma = max(math.exp(float(x[self.index["log_sigma"]])), SIGMA_FLOOR)
        centers = {True: mu, False: 0.0}
        ll = 0.0
        for table, exposed in ((self.table_E, True), (self.table_U, False)):
            if self.spec.variant == "re-complete":
                ll += self.kern.re_complete_ll(
                    self.bits, table.counts, alpha, pairs,
                    centers[exposed], sigma, self.gh_nodes, self.gh_logw,
                )
            else:
                key = "log_gamma_E" if exposed else "log_gamma_U"
                gam = math.exp(float(x[self.index[key]]))
                ll += self.kern.re_incomplete_ll(
                    self.bits, table.counts, alpha, pairs, gam,
                    centers[exposed], sigma, self.gh_nodes, self.gh_logw,
                )
        return -ll

    def certified_re_loglik(self, x):
        """Doubling-checked evaluation at the reported maximizer."""
        alpha, pairs, _ = self.unpack(x)
        params = RaschParams(alpha=alpha, alpha2=pairs, theta=0.0, model=self.spec.model)
        re_params = RandomEffectsParams(
            mu=float(x[self.index["mu"]]),
            sigma=max(math.exp(float(x[self.index["log_sigma"]])), SIGMA_FLOOR),
        )
        if self.spec.variant == "re-complete":
            ll = likelihood.re_complete_loglik(self.table_E, params, re_params, exposed=True)
            ll += likelihood.re_complete_loglik(self.table_U, params, re_params, exposed=False)
        else:
            g_E = math.exp(float(x[self.index["log_gamma_E"]]))
            g_U = math.exp(float(x[self.index["log_gamma_U"]]))
            ll = likelihood.re_observed_loglik(self.table_E, g_E, params, re_params, exposed=True)
            ll += likelihood.re_observed_loglik(self.table_U, g_U, params, re_params, exposed=False)
        return ll

    def value(self, x):
        if self.spec.random_effects:
            return self.value_re(x)
        return self.value_grad(x)[0]

    def gradient(self, x):
        if not self.spec.random_effects:
            return self.value_grad(x)[1]
        g = np.zeros(self.size)
        h = 1e-5  # keeps FD noise comfortably under the gradient certificate
        for m in range(self.size):
            step = np.zeros(self.size)
            step[m] = h
            g[m] = (self.value_re(x + step) - self.value_re(x - step)) / (2.0 * h)
        return g

    def projected_grad_norm(self, x, g):
        bounds = self.bounds()
        if bounds is None:
            return float(np.abs(g).max())
        out = 0.0
        for m in range(self.size):
            lo = bounds[m][0]
            gm = g[m]
            if lo is not None and x[m] <= lo + 1e-9 and gm >= 0:
                gm = 0.0
            out = max(out, abs(gm))
        return out


def _try_value(problem, x):
    try:
        v = problem.value(x)
    except (FloatingPointError, OverflowError):
        return np.inf
    return v if np.isfinite(v) else np.inf


def _project(cand, bounds):
    if bounds is not None:
        for m, (lo, _) in enumerate(bounds):
            if lo is not None and cand[m] < lo:
                cand[m] = lo
    return cand


def _newton_direction(problem, x, g, free):
    h = 1e-5
    H = np.empty((len(free), problem.size))
    for row, m in enumerate(free):
        step = np.zeros(problem.size)
        step[m] = h
        H[row] = (problem.gradient(x + step) - g) / h
    H = H[:, free]
    H = 0.5 * (H + H.T)
    try:
        d_free = np.linalg.solve(H, -g[free])
    except np.linalg.LinAlgError:
        d_free = -g[free]
    if not np.all(np.isfinite(d_free)):
        d_free = -g[free]
    norm = np.linalg.norm(d_free)
    if norm > 10.0:
        d_free *= 10.0 / norm
    direction = np.zeros(problem.size)
    direction[free] = d_free
    return direction


def _polish(problem, x, f):
    """Newton steps on the free subspace until the certificate holds.

    Far from the optimum, steps must decrease the objective. Once the
    gradient is small the objective decrease per step falls below float
    resolution, so acceptance switches to gradient-norm descent.
    Coordinates pinned at a bound with the gradient pointing outward are
    held fixed; a coordinate whose path to its bound is downhill is
    snapped there first (the variance floor is reached this way).
    """
    tol_g, tol_f = problem.spec.tol_grad, problem.spec.tol_loglik
    bounds = problem.bounds()
    g = problem.gradient(x)
    gn = problem.projected_grad_norm(x, g)
    for _ in range(min(60, problem.spec.max_iter)):
        if bounds is not None:
            for m, (lo, _) in enumerate(bounds):
                if lo is not None and x[m] > lo + 1e-9 and g[m] > 0:
                    cand = x.copy()
                    cand[m] = lo
                    fc = _try_value(problem, cand)
                    if fc <= f + 1e-10 * max(1.0, abs(f)):
                        x, f = cand, fc
                        g = problem.gradient(x)
                        gn = problem.projected_grad_norm(x, g)
        if gn < tol_g:
            return x, f, True
        if bounds is None:
            free = list(range(problem.size))
        else:
            free = [
                m for m in range(problem.size)
                if bounds[m][0] is None or x[m] > bounds[m][0] + 1e-9 or g[m] < 0
            ]
        newton = _newton_direction(problem, x, g, free)
        accepted = False
        if gn < 1e-3:
            scale = 1.0
            for _ in range(15):
                cand = _project(x + scale * newton, bounds)
                gc = problem.gradient(cand)
                gnc = problem.projected_grad_norm(cand, gc)
                if gnc < gn and np.isfinite(_try_value(problem, cand)):
                    x, g, gn = cand, gc, gnc
                    f = _try_value(problem, x)
                    accepted = True
                    break
                scale *= 0.5
        else:
            steepest = np.zeros(problem.size)
            steepest[free] = -g[free]
            for direction in (newton, steepest):
                scale = 1.0
                for _ in range(30):
                    cand = _project(x + scale * direction, bounds)
                    fc = _try_value(problem, cand)
                    if fc < f:
                        hit_tol = abs(f - fc) / max(abs(f), 1.0) < tol_f
                        x, f = cand, fc
                        g = problem.gradient(x)
                        gn = problem.projected_grad_norm(x, g)
                        accepted = not hit_tol
                        if hit_tol and gn >= tol_g:
                            # objective has flattened out; let the
                            # gradient-norm phase finish the job
                            accepted = gn < 1e-3
                        break
                    scale *= 0.5
                if accepted or gn < tol_g:
                    break
        if gn < tol_g:
            return x, f, True
        if not accepted:
            return x, f, False
    return x, f, gn < tol_g


def _run_start(problem, x0):
    spec = problem.spec
    if spec.random_effects:
        res = minimize(
            problem.value_re, x0, method="L-BFGS-B", jac=None, bounds=problem.bounds(),
            options={"maxiter": spec.max_iter, "ftol": 1e-12, "gtol": 1e-8},
        )
    else:
        res = minimize(
            problem.value_grad, x0, method="L-BFGS-B", jac=True,
            options={"maxiter": spec.max_iter, "ftol": 1e-13, "gtol": 1e-9},
        )
    x, f, ok = _polish(problem, res.x, float(res.fun))
    g = problem.gradient(x)
    return x, f, ok, problem.projected_grad_norm(x, g)


def _validate(table_E, table_U, spec):
    if table_E.J != table_U.J:
        raise ValidationError("the two groups must share the same number of lists")
    for t in (table_E, table_U):
        if t.complete != spec.complete:
            kind = "complete" if spec.complete else "missing-all-zero"
            raise ValidationError(f"variant {spec.variant!r} requires {kind} tables")
        if t.counts.sum() <= 0:
            raise ValidationError("each group needs at least one observed case")
    if table_E.J == 1 and spec.variant == "incomplete-free-theta":
        raise ValidationError(
            "J=1 with a free shift and free rates has more parameters than observed cells"
        )


def fit(table_E, table_U, spec):
    """Fit one variant to an exposed/unexposed pair of tables.

    Returns the best certified local maximizer over the multistart runs;
    raises FitError (carrying the best attempt) if no start converges.
    """
    _validate(table_E, table_U, spec)
    problem = _Problem(table_E, table_U, spec)
    base = problem.start() if spec.warm_start is None else np.asarray(spec.warm_start, dtype=float)
    if base.shape != (problem.size,):
        raise ValidationError(f"warm start must have length {problem.size}")
    rng = np.random.default_rng(spec.seed)
    best = None
    for s in range(spec.multistart):
        x0 = base if s == 0 else base + rng.normal(0.0, 0.25, problem.size)
        try:
            x, f, ok, gnorm = _run_start(problem, x0)
        except (NumericalError, FloatingPointError):  # pragma: no cover - rare
            continue
        # strict comparison keeps the lowest start index on ties
        if best is None or (ok and not best[2]) or (ok == best[2] and f < best[1]):
            best = (x, f, ok, gnorm, s)
    if best is None:
        raise FitError("all optimizer starts failed")
    x, f, ok, gnorm, _ = best
    loglik = problem.certified_re_loglik(x) if spec.random_effects else -f
    result = _build_result(problem, x, loglik, ok, gnorm, spec.multistart)
    if not ok:
        raise FitError(
            f"no start met the gradient certificate (best sup-norm {gnorm:.2e})",
            best_result=result,
        )
    return result


def _build_result(problem, x, loglik, converged, grad_norm, n_starts):
    spec = problem.spec
    alpha, pairs, theta = problem.unpack(x)
    params = RaschParams(alpha=alpha, alpha2=pairs, theta=theta, model=spec.model)
    re_params = None
    if spec.random_effects:
        re_params = RandomEffectsParams(
            mu=float(x[problem.index["mu"]]),
            sigma=math.exp(float(x[problem.index["log_sigma"]])),
        )
    shift = re_params.mu if re_params is not None else theta
    miss_E = miss_probability(params, shift)
    miss_U = miss_probability(params, 0.0)
    rates = None
    if spec.variant == "re-incomplete":
        rates = PoissonRates(
            gamma_E=math.exp(float(x[problem.index["log_gamma_E"]])),
            gamma_U=math.exp(float(x[problem.index["log_gamma_U"]])),
        )
    elif not spec.complete:
        rates = PoissonRates(
            gamma_E=profile_gamma(problem.table_E, params, shift),
            gamma_U=profile_gamma(problem.table_U, params, 0.0),
        )
    if rates is not None:
        n_E, n_U = rates.gamma_E, rates.gamma_U
        ratio = rates.ratio
    else:
        n_E = problem.table_E.total_observed
        n_U = problem.table_U.total_observed
        ratio = n_E / n_U
    derived = {
        "miss_prob_E": miss_E,
        "miss_prob_U": miss_U,
        "expected_missing_E": n_E * miss_E,
        "expected_missing_U": n_U * miss_U,
        "ratio": ratio,
    }
    return FitResult(
        spec=spec,
        params=params,
        re_params=re_params,
        rates=rates,
        loglik=float(loglik),
        converged=converged,
        n_restarts_used=n_starts,
        grad_norm=float(grad_norm),
        not_estimable=tuple(j + 1 for j in problem.dead_lists),
        derived=derived,
    )


def profile_gamma(table, params, exposure_shift):
    """Closed-form maximizer of the observed likelihood in gamma."""
    if table.complete:
        raise ValidationError("profile gamma applies to missing-all-zero tables")
    p0 = miss_probability(params, exposure_shift)
    if p0 >= 1.0:
        raise ValidationError("miss probability is 1; gamma is unbounded")
    return float(table.counts[1:].sum() / (1.0 - p0))


def odds_ratio(N_E, N_U, T_E, T_U, rare=False):
    """Odds ratio of case counts against group totals.

    The exact form uses the non-case counts; with ``rare`` the non-cases
    are approximated by the totals.
    """
    if min(N_U, T_E, T_U) <= 0:
        raise ValidationError("counts and totals must be positive")
    if rare:
        return (N_E / N_U) * (T_U / T_E)
    if not (N_E < T_E and N_U < T_U):
        raise ValidationError("case counts must be below the group totals")
    return (N_E * (T_U - N_U)) / (N_U * (T_E - N_E))
