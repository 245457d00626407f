"""Cell probabilities of the capture model.

Each list k captures an individual with probability
logistic(shift + alpha_k + sum_{i<k} alpha_{ik} * x_i), where x_i are the
realized memberships of the earlier lists. With all interactions zero the
lists are independent. The shift is the differential-ascertainment
parameter: theta for the exposed group, 0 for the unexposed group.
"""

import dataclasses
import math

import numpy as np

from . import backend
from .errors import ValidationError
from .tables import pattern_bits, pattern_index

MODELS = ("independent", "dynamic")


def pair_indices(J):
    """Two-list interaction slots in lexicographic order, 0-based."""
    return tuple((i, k) for i in range(J) for k in range(i + 1, J))


def n_pairs(J):
    return J * (J - 1) // 2


@dataclasses.dataclass(frozen=True)
class RaschParams:
    """List strengths, two-list interactions, and the differential shift.

    Only two-list interactions exist; higher orders are rejected by the
    length check on ``alpha2``.
    """

    alpha: np.ndarray
    alpha2: np.ndarray
    theta: float = 0.0
    model: str = "dynamic"

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        alpha2 = np.atleast_1d(np.asarray(self.alpha2, dtype=float)) if np.size(self.alpha2) else np.zeros(0)
        J = alpha.size
        if alpha2.size != n_pairs(J):
            raise ValidationError(
                f"alpha2 must have J(J-1)/2 = {n_pairs(J)} entries for J={J}, got {alpha2.size}"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(alpha2)) and math.isfinite(self.theta)):
            raise ValidationError("parameters must be finite")
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}")
        if self.model == "independent" and np.any(alpha2 != 0):
            raise ValidationError("independent model requires all interactions to be zero")
        alpha.setflags(write=False)
        alpha2.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha2", alpha2)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def J(self):
        return self.alpha.size


@dataclasses.dataclass(frozen=True)
class PoissonRates:
    """Expected true case counts of the two groups."""

    gamma_E: float
    gamma_U: float

    def __post_init__(self):
        if not (self.gamma_E > 0 and self.gamma_U > 0):
            raise ValidationError("Poisson rates must be strictly positive")

    @property
    def ratio(self):
        return self.gamma_E / self.gamma_U


def _logistic(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def capture_prob(params, theta_effective, k, history):
    """Probability that list k captures, given the earlier lists' outcomes.

    ``k`` is 1-based; ``history`` holds the memberships of lists 1..k-1.
    """
    if not 1 <= k <= params.J:
        raise ValidationError(f"list index {k} out of range 1..{params.J}")
    if len(history) != k - 1:
        raise ValidationError(f"history must have {k - 1} entries, got {len(history)}")
    eta = theta_effective + params.alpha[k - 1]
    if params.model == "dynamic":
        slots = pair_indices(params.J)
        for m, (i, kk) in enumerate(slots):
            if kk == k - 1 and i < k - 1:
                eta += params.alpha2[m] * history[i]
    return _logistic(eta)


def cell_probabilities(params, exposure_shift):
    """All 2^J cell probabilities, in pattern index order."""
    bits = pattern_bits(params.J)
    kern = backend.active()
    logp = kern.cell_logprobs(bits, params.alpha, params.alpha2, float(exposure_shift))
    return np.exp(logp)


def cell_probability(params, exposure_shift, pattern):
    """Probability of one capture pattern (string of J 0/1 characters)."""
    if len(pattern) != params.J:
        raise ValidationError(f"pattern {pattern!r} has wrong length for J={params.J}")
    return float(cell_probabilities(params, exposure_shift)[pattern_index(pattern)])


def miss_probability(params, exposure_shift):
    """Probability of the all-zero pattern.

    Interactions never activate on an empty history, so this reduces to
    prod_j (1 + e^(shift + alpha_j))^-1 for both models.
    """
    acc = 0.0
    for a in params.alpha:
        acc -= np.logaddexp(0.0, exposure_shift + a)
    return float(np.exp(acc))


def expected_missing(N, params, exposure_shift):
    """Expected count of never-ascertained individuals out of N."""
    if N <= 0:
        raise ValidationError("N must be positive")
    return N * miss_probability(params, exposure_shift)
