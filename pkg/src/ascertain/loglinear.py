"""Poisson log-linear capture-recapture on the observed cells.

Models contain the intercept and all main effects; candidate models vary
only the pairwise interactions (higher-order terms are never included, to
keep the missing cell identifiable). The all-zero cell is estimated by the
odd/even product ratio of fitted means.
"""

import dataclasses
import itertools
import math

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from .errors import NumericalError, ValidationError
from .tables import pattern_bits

IRLS_TOL = 1e-10
IRLS_MAX_ITER = 100


def lincoln_petersen(M11, M10, M01):
    """Two-list population estimate (M11+M10)(M11+M01)/M11."""
    if M11 <= 0:
        raise ValidationError("no overlap between the two lists; estimator undefined")
    return (M11 + M10) * (M11 + M01) / M11


def pair_terms(J):
    """All pairwise interaction terms, lexicographic, 0-based."""
    return tuple(itertools.combinations(range(J), 2))


def term_name(term):
    i, j = term
    return f"{i + 1}-{j + 1}"


def _design(J, terms):
    bits = pattern_bits(J)[1:]  # observed cells only
    cols = [np.ones(bits.shape[0])]
    names = ["intercept"]
    for j in range(J):
        cols.append(bits[:, j])
        names.append(f"main_{j + 1}")
    for i, j in terms:
        cols.append(bits[:, i] * bits[:, j])
        names.append(term_name((i, j)))
    return np.column_stack(cols), names


@dataclasses.dataclass(frozen=True)
class LoglinearModel:
    """A fitted Poisson log-linear model on the 2^J - 1 observed cells."""

    J: int
    terms: tuple
    coef: np.ndarray
    coef_names: tuple
    fitted: np.ndarray
    counts: np.ndarray
    deviance: float
    pearson_chi2: float
    dof: int
    p_value: float
    loglik: float
    aic: float
    bic: float
    converged: bool
    diverged: bool

    @property
    def saturated(self):
        return self.dof == 0


def fit_loglinear(table, terms=()):
    """Poisson MLE by iteratively reweighted least squares."""
    if table.complete:
        raise ValidationError("log-linear capture models need a missing-all-zero table")
    J = table.J
    terms = tuple(sorted(tuple(t) for t in terms))
    for i, j in terms:
        if not (0 <= i < j < J):
            raise ValidationError(f"bad interaction term {(i, j)}")
    X, names = _design(J, terms)
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        _, _, piv = linalg.qr(X, pivoting=True)
        dropped = sorted(names[k] for k in piv[rank:])
        raise ValidationError(f"collinear design columns: {', '.join(dropped)}")
    if X.shape[0] < X.shape[1]:
        raise ValidationError("more terms than observed cells")

    y = table.counts[1:].astype(float)
    lam = y + 0.5
    eta = np.log(lam)
    beta = np.zeros(X.shape[1])
    dev = _deviance(y, lam)
    converged = False
    for _ in range(IRLS_MAX_ITER):
        z = eta + (y - lam) / lam
        WX = X * lam[:, None]
        beta = np.linalg.solve(X.T @ WX, WX.T @ z)
        eta = X @ beta
        lam = np.exp(eta)
        new_dev = _deviance(y, lam)
        # the +0.1 keeps the relative test meaningful as deviance nears 0
        if abs(new_dev - dev) <= IRLS_TOL * (abs(dev) + 0.1):
            dev = new_dev
            converged = True
            break
        dev = new_dev
    diverged = (not converged) or (np.abs(beta).max() > 50.0) or bool(np.any(lam < 1e-10))

    chi2_stat = float(np.sum((y - lam) ** 2 / lam))
    dof = X.shape[0] - X.shape[1]
    if dof == 0:
        p = 1.0 if chi2_stat < 1e-8 else 0.0
    else:
        p = float(chi2.sf(chi2_stat, dof))
    ll = float(np.sum(y * np.log(lam) - lam) - sum(math.lgamma(v + 1.0) for v in y))
    k = X.shape[1]
    return LoglinearModel(
        J=J,
        terms=terms,
        coef=beta,
        coef_names=tuple(names),
        fitted=lam,
        counts=y,
        deviance=float(dev),
        pearson_chi2=chi2_stat,
        dof=dof,
        p_value=p,
        loglik=ll,
        aic=2.0 * k - 2.0 * ll,
        bic=k * math.log(X.shape[0]) - 2.0 * ll,
        converged=converged,
        diverged=diverged,
    )


def _deviance(y, lam):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / lam), 0.0)
    return float(2.0 * np.sum(term - (y - lam)))


def missing_cell(model):
    """Estimate the all-zero cell as prod(lambda over odd-sized patterns)
    divided by prod(lambda over even-sized patterns), the all-zero cell
    excluded from the even set."""
    bits = pattern_bits(model.J)[1:]
    sizes = bits.sum(axis=1)
    sign = np.where(sizes % 2 == 1, 1.0, -1.0)
    if np.any(model.fitted[sign < 0] <= 0.0):
        raise ValidationError("zero fitted mean in the even set")
    return float(np.exp(np.sum(sign * np.log(model.fitted))))


@dataclasses.dataclass(frozen=True)
class Candidate:
    terms: tuple
    stats: tuple  # one LoglinearModel per table, same order as the input
    admissible: bool

    @property
    def n_terms(self):
        return len(self.stats[0].coef)

    @property
    def min_p(self):
        return min(m.p_value for m in self.stats)


@dataclasses.dataclass(frozen=True)
class ModelSelectionReport:
    candidates: tuple
    selected: Candidate
    lower_p: float
    exclude_saturated: bool

    @property
    def missing_estimates(self):
        return tuple(missing_cell(m) for m in self.selected.stats)


def select_model(tables, lower_p=0.05, exclude_saturated=True):
    """Pick the admissible candidate with the most terms.

    A candidate is admissible when the same term-set clears the p-value
    floor on every table (and is not the saturated model, if excluded).
    Ties go to the largest worst-case p-value across tables.
    """
    if not isinstance(tables, (list, tuple)):
        tables = (tables,)
    if not tables:
        raise ValidationError("need at least one table")
    J = tables[0].J
    candidates = []
    for r in range(len(pair_terms(J)) + 1):
        for terms in itertools.combinations(pair_terms(J), r):
            stats = tuple(fit_loglinear(t, terms) for t in tables)
            ok = all(not m.diverged and m.p_value >= lower_p for m in stats)
            if exclude_saturated and stats[0].saturated:
                ok = False
            candidates.append(Candidate(terms=terms, stats=stats, admissible=ok))
    admissible = [c for c in candidates if c.admissible]
    if not admissible:
        summary = "; ".join(
            f"[{','.join(term_name(t) for t in c.terms) or 'none'}] min p={c.min_p:.4g}"
            for c in candidates
        )
        raise ValidationError(f"no admissible log-linear model: {summary}")
    selected = max(admissible, key=lambda c: (c.n_terms, c.min_p))
    return ModelSelectionReport(
        candidates=tuple(candidates),
        selected=selected,
        lower_p=lower_p,
        exclude_saturated=exclude_saturated,
    )


def complete_tables(tables, models):
    """Fill each table's all-zero cell with the floor of its estimate.

    The raw real-valued estimates stay available through the models; the
    completed tables carry integer counts.
    """
    if len(tables) != len(models):
        raise ValidationError("one fitted model per table required")
    out = []
    raw = []
    for table, model in zip(tables, models):
        est = missing_cell(model)
        if not math.isfinite(est):
            raise ValidationError("missing-cell estimate is not finite")
        raw.append(est)
        out.append(table.with_missing_cell(math.floor(est)))
    return tuple(out), tuple(raw)
