"""Simulation studies: observed-ratio bias, estimator recovery, and the
odds-ratio distortion caused by differential ascertainment.

Populations are never materialized person by person. Splitting the Poisson
total across cells gives independent Poisson counts with means gamma*p_c,
so each replicate draws cell counts directly.
"""

import dataclasses

import numpy as np

from . import backend
from .errors import AscertainError, ValidationError
from .estimation import FitSpec, fit, odds_ratio
from .rasch import RaschParams, n_pairs, pair_indices
from .tables import ContingencyTable, pattern_bits

CONVENTIONS = ("exposed", "unexposed")


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Generating model for one study run."""

    J: tuple
    gamma_E: float
    gamma_U: float
    alpha: float
    alpha2: float
    theta_grid: tuple
    B: int
    seed: int = 0
    theta_applies_to: str = "exposed"
    model: str = "dynamic"

    def __post_init__(self):
        object.__setattr__(self, "J", tuple(int(j) for j in np.atleast_1d(self.J)))
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        if self.B < 1:
            raise ValidationError("B must be at least 1")
        if not self.theta_grid:
            raise ValidationError("theta grid must be non-empty")
        if any(j < 1 for j in self.J):
            raise ValidationError("J must be at least 1")
        if self.theta_applies_to not in CONVENTIONS:
            raise ValidationError(f"theta_applies_to must be one of {CONVENTIONS}")
        if min(self.gamma_E, self.gamma_U) <= 0:
            raise ValidationError("rates must be positive")

    def params_for(self, J):
        alpha2 = np.full(n_pairs(J), self.alpha2)
        if self.model == "independent":
            alpha2 = np.zeros(n_pairs(J))
        return RaschParams(
            alpha=np.full(J, self.alpha), alpha2=alpha2, theta=0.0, model=self.model
        )

    def shifts(self, theta):
        """(exposed shift, unexposed shift) under the configured convention."""
        if self.theta_applies_to == "exposed":
            return float(theta), 0.0
        return 0.0, float(theta)


def generate_population(gamma, params, exposure_shift, seed_key):
    """Draw one complete population table.

    The total is Poisson(gamma) and patterns follow the sequential capture
    model, which is equivalent to independent Poisson counts per cell.
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    rng = np.random.default_rng(seed_key)
    kern = backend.active()
    bits = pattern_bits(params.J)
    p = np.exp(kern.cell_logprobs(bits, params.alpha, params.alpha2, exposure_shift))
    counts = rng.poisson(gamma * p).astype(float)
    return ContingencyTable(J=params.J, counts=counts, complete=True)


@dataclasses.dataclass(frozen=True)
class StudyRow:
    J: int
    theta: float
    statistic: str
    mean: float
    lower: float
    upper: float
    n_used: int
    n_excluded: int


def _summary(values, J, theta, statistic, n_excluded):
    arr = np.asarray(values, dtype=float)
    return StudyRow(
        J=J,
        theta=theta,
        statistic=statistic,
        mean=float(arr.mean()),
        lower=float(np.quantile(arr, 0.025)),
        upper=float(np.quantile(arr, 0.975)),
        n_used=arr.size,
        n_excluded=n_excluded,
    )


def bias_study(config):
    """Observed exposed/unexposed count ratio across the theta grid.

    The all-zero cell is excluded from both counts, so the rows show how
    far differential ascertainment pushes the observed ratio from the true
    gamma_E/gamma_U ratio.
    """
    rows = []
    for J in config.J:
        params = config.params_for(J)
        for ti, theta in enumerate(config.theta_grid):
            shift_E, shift_U = config.shifts(theta)
            ratios = []
            excluded = 0
            for b in range(config.B):
                t_E = generate_population(config.gamma_E, params, shift_E, [config.seed, J, ti, b, 0])
                t_U = generate_population(config.gamma_U, params, shift_U, [config.seed, J, ti, b, 1])
                obs_E = t_E.counts[1:].sum()
                obs_U = t_U.counts[1:].sum()
                if obs_U == 0:
                    excluded += 1
                    continue
                ratios.append(obs_E / obs_U)
            if not ratios:
                raise ValidationError("every replicate had an empty unexposed group")
            rows.append(_summary(ratios, J, theta, "observed_ratio", excluded))
    return tuple(rows)


def _param_names(J, model):
    names = [f"alpha_{j + 1}" for j in range(J)]
    if model == "dynamic":
        names += [f"pair_{i + 1}_{j + 1}" for i, j in pair_indices(J)]
    return names + ["gamma_E", "gamma_U", "theta"]


def estimator_study(config):
    """Generate, drop the all-zero cell, refit, and summarize each estimate."""
    if len(config.J) != 1:
        raise ValidationError("estimator study uses a single J")
    J = config.J[0]
    params = config.params_for(J)
    names = _param_names(J, config.model)
    rows = []
    for ti, theta in enumerate(config.theta_grid):
        shift_E, shift_U = config.shifts(theta)
        estimates = []
        excluded = 0
        for b in range(config.B):
            t_E = generate_population(config.gamma_E, params, shift_E, [config.seed, J, ti, b, 0])
            t_U = generate_population(config.gamma_U, params, shift_U, [config.seed, J, ti, b, 1])
            try:
                res = _fit_replicate(t_E, t_U, config, b)
            except AscertainError:
                excluded += 1
                continue
            est = list(res.params.alpha)
            if config.model == "dynamic":
                est += list(res.params.alpha2)
            est += [res.rates.gamma_E, res.rates.gamma_U, res.params.theta]
            estimates.append(est)
        if not estimates:
            raise ValidationError("every replicate failed to fit")
        block = np.asarray(estimates)
        for k, name in enumerate(names):
            rows.append(_summary(block[:, k], J, theta, name, excluded))
    return tuple(rows)


def _fit_replicate(t_E, t_U, config, b):
    spec = FitSpec(variant="incomplete-free-theta", model=config.model, multistart=1)
    try:
        return fit(t_E.without_missing_cell(), t_U.without_missing_cell(), spec)
    except AscertainError:
        retry = FitSpec(variant="incomplete-free-theta", model=config.model, multistart=5, seed=b)
        return fit(t_E.without_missing_cell(), t_U.without_missing_cell(), retry)


@dataclasses.dataclass(frozen=True)
class ORBiasRow:
    theta: float
    naive_or: float
    corrected_or: float
    true_or: float
    corrected_closer_frac: float
    n_used: int
    n_excluded: int


def or_bias(config, T_E, T_U):
    """Naive (observed-count) versus model-corrected odds ratios.

    The naive OR plugs observed case counts into the 2x2 odds ratio; the
    corrected OR uses the fitted rates; the true OR uses the generating
    rates. Requires group totals well above the case counts.
    """
    if len(config.J) != 1:
        raise ValidationError("odds-ratio study uses a single J")
    J = config.J[0]
    if T_E <= config.gamma_E or T_U <= config.gamma_U:
        raise ValidationError("group totals must exceed the expected case counts")
    params = config.params_for(J)
    rows = []
    for ti, theta in enumerate(config.theta_grid):
        shift_E, shift_U = config.shifts(theta)
        true_or = odds_ratio(config.gamma_E, config.gamma_U, T_E, T_U)
        naive, corrected, closer = [], [], []
        excluded = 0
        for b in range(config.B):
            t_E = generate_population(config.gamma_E, params, shift_E, [config.seed, J, ti, b, 0])
            t_U = generate_population(config.gamma_U, params, shift_U, [config.seed, J, ti, b, 1])
            try:
                res = _fit_replicate(t_E, t_U, config, b)
                obs = odds_ratio(t_E.counts[1:].sum(), t_U.counts[1:].sum(), T_E, T_U)
                cor = odds_ratio(res.rates.gamma_E, res.rates.gamma_U, T_E, T_U)
            except AscertainError:
                excluded += 1
                continue
            naive.append(obs)
            corrected.append(cor)
            closer.append(abs(cor - true_or) <= abs(obs - true_or))
        if not naive:
            raise ValidationError("every replicate failed")
        rows.append(
            ORBiasRow(
                theta=theta,
                naive_or=float(np.mean(naive)),
                corrected_or=float(np.mean(corrected)),
                true_or=float(true_or),
                corrected_closer_frac=float(np.mean(closer)),
                n_used=len(naive),
                n_excluded=excluded,
            )
        )
    return tuple(rows)
