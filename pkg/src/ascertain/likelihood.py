"""Log-likelihoods of contingency tables under the capture model.

Complete tables are multinomial. Incomplete tables marginalize the
unobserved all-zero cell against a Poisson population size; the infinite
sum collapses to a closed form because a Poisson total split multinomially
gives independent Poisson cells, and the unobserved cell's factor drops
out. The random-effects variants integrate the shift over a normal law by
Gauss-Hermite quadrature.
"""

import dataclasses
import math

import numpy as np

from . import backend
from .errors import NumericalError, ValidationError
from .tables import pattern_bits

SIGMA_FLOOR = 1e-6
GH_NODES = 40
QUAD_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class RandomEffectsParams:
    """Normal law of the individual shift: mean mu for the exposed group,
    0 for the unexposed group, common dispersion sigma.

    sigma is optimized on a log scale with floor 1e-6 so the integrand
    stays proper; a value at the floor means the data want no dispersion.
    """

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValidationError("random-effects parameters must be finite")
        if self.sigma < 0:
            raise ValidationError("sigma must be non-negative")


def _check(table, params):
    if table.J != params.J:
        raise ValidationError(f"table has J={table.J} lists but parameters have J={params.J}")


def complete_loglik(table, params, exposure_shift):
    """Multinomial log-density of a complete table, constant included."""
    _check(table, params)
    if not table.complete:
        raise ValidationError("complete table required")
    kern = backend.active()
    ll, _ = kern.complete_ll_grad(
        pattern_bits(table.J), table.counts, params.alpha, params.alpha2, float(exposure_shift)
    )
    return float(ll)


def observed_loglik(table, gamma, params, exposure_shift):
    """Log-likelihood of an incomplete table at an explicit Poisson rate."""
    _check(table, params)
    if table.complete:
        raise ValidationError("missing-all-zero table required")
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    kern = backend.active()
    ll = kern.observed_ll(
        pattern_bits(table.J), table.counts, params.alpha, params.alpha2,
        float(exposure_shift), float(gamma),
    )
    return float(ll)


def joint_loglik(table_E, table_U, rates, params):
    """Two independent groups: exposed evaluated at shift theta, unexposed at 0."""
    return observed_loglik(table_E, rates.gamma_E, params, params.theta) + observed_loglik(
        table_U, rates.gamma_U, params, 0.0
    )


def _gh_rule(n):
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    return nodes, np.log(weights) - 0.5 * math.log(math.pi)


_GH_CACHE = {}


def gh_rule(n):
    if n not in _GH_CACHE:
        _GH_CACHE[n] = _gh_rule(n)
    return _GH_CACHE[n]


def _quadrature(eval_at):
    """Run a Gauss-Hermite evaluation at GH_NODES and at double the nodes;
    accept only if the two agree."""
    first = eval_at(*gh_rule(GH_NODES))
    second = eval_at(*gh_rule(2 * GH_NODES))
    delta = abs(second - first)
    if not delta < QUAD_TOL:
        raise NumericalError(
            f"quadrature not converged: doubling the nodes moved the value by {delta:.3e}"
        )
    return float(second)


def re_complete_loglik(table, params, re_params, exposed):
    """Complete-table log-likelihood with the shift integrated over its
    normal law (mean mu if exposed, else 0)."""
    _check(table, params)
    if not table.complete:
        raise ValidationError("complete table required")
    kern = backend.active()
    bits = pattern_bits(table.J)
    center = re_params.mu if exposed else 0.0
    sigma = max(re_params.sigma, SIGMA_FLOOR)
    return _quadrature(
        lambda nodes, logw: kern.re_complete_ll(
            bits, table.counts, params.alpha, params.alpha2, center, sigma, nodes, logw
        )
    )


def re_observed_loglik(table, gamma, params, re_params, exposed):
    """Incomplete-table log-likelihood with the shift integrated over its
    normal law; the missing-cell Poisson sum is applied in closed form
    inside the integral."""
    _check(table, params)
    if table.complete:
        raise ValidationError("missing-all-zero table required")
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    kern = backend.active()
    bits = pattern_bits(table.J)
    center = re_params.mu if exposed else 0.0
    sigma = max(re_params.sigma, SIGMA_FLOOR)
    return _quadrature(
        lambda nodes, logw: kern.re_incomplete_ll(
            bits, table.counts, params.alpha, params.alpha2, float(gamma),
            center, sigma, nodes, logw,
        )
    )
