"""Bootstrap null distribution of the shift estimate and the three-sided
equivalence/superiority/inferiority decision rule.

The null distribution comes from a parametric bootstrap: fit the no-shift
model, generate B populations from it, refit the free-shift model on each.
Replicates are keyed by (seed, index) so any execution order gives the
same draws.
"""

import dataclasses
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import backend
from .errors import AscertainError, NumericalError, ValidationError
from .estimation import FitSpec, fit
from .tables import ContingencyTable, pattern_bits

REGIMES = ("incomplete", "complete")
DEFAULT_B = 1500
DEFAULT_ALPHA = 0.05


@dataclasses.dataclass(frozen=True)
class NullDistribution:
    """Empirical distribution of the shift estimate under no shift."""

    draws: np.ndarray
    seed: int
    regime: str
    B: int
    n_failed: int
    null_loglik: float

    def quantile(self, p):
        return float(np.quantile(self.draws, p))


@dataclasses.dataclass(frozen=True)
class ThreeSidedOutcome:
    theta_hat: float
    alpha: float
    delta: float
    q_alpha_half: float
    q_alpha: float
    q_one_minus_alpha: float
    q_one_minus_alpha_half: float
    reject_plus: bool
    reject_minus: bool
    reject_null: bool
    delta1: float
    delta2: float

    @property
    def interpretation(self):
        if self.reject_null:
            side = "above" if self.reject_minus else "below"
            return f"shift lies {side} the equivalence band (no-shift hypothesis rejected)"
        if self.reject_plus and self.reject_minus:
            return "shift within the equivalence band (both one-sided hypotheses rejected)"
        if self.reject_plus:
            return "shift not above the band (upper one-sided hypothesis rejected)"
        if self.reject_minus:
            return "shift not below the band (lower one-sided hypothesis rejected)"
        return "no hypothesis rejected at this delta"


def _null_spec(regime, model):
    variant = "complete-null-theta" if regime == "complete" else "incomplete-null-theta"
    return FitSpec(variant=variant, model=model)


def _free_variant(regime):
    return "complete-free-theta" if regime == "complete" else "incomplete-free-theta"


def _replicate(args):
    (regime, model, J, probs, size_E, size_U, warm, seed, b, attempt) = args
    key = [seed, b] if attempt == 0 else [seed, b, 1]
    rng = np.random.default_rng(key)
    counts = []
    for size, poisson in ((size_E, regime == "incomplete"), (size_U, regime == "incomplete")):
        n = rng.poisson(size) if poisson else int(size)
        cell = rng.multinomial(n, probs).astype(float)
        if regime == "incomplete":
            cell[0] = 0.0
        counts.append(cell)
    try:
        t_E = ContingencyTable(J=J, counts=counts[0], complete=(regime == "complete"))
        t_U = ContingencyTable(J=J, counts=counts[1], complete=(regime == "complete"))
        spec = FitSpec(variant=_free_variant(regime), model=model, multistart=1, warm_start=warm)
        return fit(t_E, t_U, spec).params.theta
    except (AscertainError, FloatingPointError):
        return None


def bootstrap_null(table_E, table_U, regime, B=DEFAULT_B, seed=0, model="dynamic", threads=1):
    """Draw the null distribution of the free shift estimate.

    Fits the no-shift model, then for each replicate generates both groups
    from the fitted null cell probabilities (Poisson totals with the
    all-zero cell removed in the incomplete regime, fixed totals in the
    complete regime) and refits the free-shift model.
    """
    if regime not in REGIMES:
        raise ValidationError(f"unknown regime {regime!r}")
    if B < 1:
        raise ValidationError("B must be at least 1")
    null_fit = fit(table_E, table_U, _null_spec(regime, model))
    params = null_fit.params
    kern = backend.active()
    bits = pattern_bits(table_E.J)
    probs = np.exp(kern.cell_logprobs(bits, params.alpha, params.alpha2, 0.0))
    probs = probs / probs.sum()
    if regime == "incomplete":
        size_E, size_U = null_fit.rates.gamma_E, null_fit.rates.gamma_U
    else:
        size_E, size_U = table_E.total_observed, table_U.total_observed
    if model == "dynamic":
        warm = np.concatenate([params.alpha, params.alpha2, [0.0]])
    else:
        warm = np.concatenate([params.alpha, [0.0]])

    jobs = [
        (regime, model, table_E.J, probs, size_E, size_U, warm, seed, b, 0)
        for b in range(B)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            first = list(pool.map(_replicate, jobs, chunksize=max(1, B // (8 * threads))))
    else:
        first = [_replicate(j) for j in jobs]
    draws = []
    n_failed = 0
    for b, theta in enumerate(first):
        if theta is None:
            theta = _replicate((regime, model, table_E.J, probs, size_E, size_U, warm, seed, b, 1))
        if theta is None:
            n_failed += 1
        else:
            draws.append(theta)
    if n_failed > 0 and n_failed >= 0.01 * B:
        raise NumericalError(f"{n_failed} of {B} bootstrap replicates failed to fit")
    return NullDistribution(
        draws=np.asarray(draws),
        seed=seed,
        regime=regime,
        B=B,
        n_failed=n_failed,
        null_loglik=null_fit.loglik,
    )


def delta_thresholds(theta_hat, dist, alpha=DEFAULT_ALPHA):
    """Largest delta with no rejection and smallest with equivalence."""
    return (
        float(theta_hat - dist.quantile(alpha)),
        float(dist.quantile(1.0 - alpha) - theta_hat),
    )


def decide(theta_hat, dist, alpha=DEFAULT_ALPHA, delta=0.0):
    """Apply the three-sided rule at a given equivalence margin delta."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must be in (0, 1)")
    if delta < 0.0:
        raise ValidationError("delta must be non-negative")
    q_ah, q_a, q_1a, q_1ah = (
        float(v)
        for v in np.quantile(
            dist.draws, [alpha / 2.0, alpha, 1.0 - alpha, 1.0 - alpha / 2.0]
        )
    )
    d1, d2 = theta_hat - q_a, q_1a - theta_hat
    return ThreeSidedOutcome(
        theta_hat=float(theta_hat),
        alpha=float(alpha),
        delta=float(delta),
        q_alpha_half=q_ah,
        q_alpha=q_a,
        q_one_minus_alpha=q_1a,
        q_one_minus_alpha_half=q_1ah,
        reject_plus=bool(theta_hat - delta < q_a),
        reject_minus=bool(theta_hat + delta > q_1a),
        reject_null=bool(theta_hat - delta > q_1ah or theta_hat + delta < q_ah),
        delta1=d1,
        delta2=d2,
    )
