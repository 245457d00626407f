"""Command-line front end.

Subcommands: fit, test, loglinear, simulate, probs. Every run echoes its
effective configuration and the SHA-256 digest of the input into the
report, and fixed seeds give byte-identical output.
"""

import argparse
import importlib.resources
import json
import sys

import numpy as np

from . import backend, loglinear, simstudy, threesided
from .errors import FitError, NumericalError, ValidationError
from .estimation import FitSpec, fit
from .rasch import RaschParams, cell_probabilities, n_pairs, pair_indices
from .report import Report, parse_report, sha256_hex
from .tables import as_pair, pattern_bits, read_tables_csv

_BUILTIN_TABLES = {
    "builtin:nvdrs": "nvdrs.csv",
    "builtin:nvdrs-completed": "nvdrs_completed.csv",
}

_BUILTIN_CONFIGS = {
    "builtin:bias-default": {
        "J": [1, 3, 5],
        "gamma_E": 500.0,
        "gamma_U": 1000.0,
        "alpha": 0.5,
        "alpha2": -0.2,
        "theta_grid": [-1.0, -0.5, 0.0, 0.5, 1.0],
        "B": 1000,
        "seed": 0,
        "theta_applies_to": "unexposed",
    },
    "builtin:estimators-default": {
        "J": [3],
        "gamma_E": 500.0,
        "gamma_U": 1000.0,
        "alpha": 0.5,
        "alpha2": -0.2,
        "theta_grid": [-1.0, 1.0],
        "B": 200,
        "seed": 0,
        "theta_applies_to": "exposed",
    },
    "builtin:or-default": {
        "J": [3],
        "gamma_E": 500.0,
        "gamma_U": 1000.0,
        "alpha": 0.5,
        "alpha2": -0.2,
        "theta_grid": [-1.0, 0.0, 1.0],
        "B": 200,
        "seed": 0,
        "theta_applies_to": "exposed",
        "T_E": 5000.0,
        "T_U": 10000.0,
    },
}


def _load_text(path, registry=None):
    if registry and path in registry:
        res = importlib.resources.files("ascertain").joinpath(f"data/{registry[path]}")
        data = res.read_bytes()
    elif path.startswith("builtin:"):
        known = ", ".join(sorted(registry or ()))
        raise ValidationError(f"unknown builtin {path!r}; available: {known}")
    else:
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc}") from exc
    return data.decode(), sha256_hex(data)


def _load_pair(path):
    text, digest = _load_text(path, _BUILTIN_TABLES)
    tables = read_tables_csv(text)
    table_E, table_U = as_pair(tables)
    return table_E, table_U, digest


def _echo(rep, args, digest=None):
    rep.set("command", args.command)
    if digest is not None:
        rep.set("input", args.input)
        rep.set("input_sha256", digest)
    rep.set("backend", backend.active_name())


def _prob_rows(params, shift_E):
    bits = pattern_bits(params.J)
    p_E = cell_probabilities(params, shift_E)
    p_U = cell_probabilities(params, 0.0)
    rows = []
    for c in range(bits.shape[0]):
        pattern = "".join(str(int(b)) for b in bits[c])
        rows.append((pattern, p_E[c], p_U[c]))
    return rows


def _fit_block(rep, res, prefix=""):
    p = res.params
    rep.set(prefix + "loglik", res.loglik)
    rep.set(prefix + "converged", res.converged)
    rep.set(prefix + "grad_norm", res.grad_norm)
    for j in range(p.J):
        rep.set(f"{prefix}alpha_{j + 1}", float(p.alpha[j]))
    if p.model == "dynamic":
        for (i, j), v in zip(pair_indices(p.J), p.alpha2):
            rep.set(f"{prefix}pair_{i + 1}_{j + 1}", float(v))
    if res.re_params is not None:
        rep.set(prefix + "mu", res.re_params.mu)
        rep.set(prefix + "sigma", res.re_params.sigma)
    else:
        rep.set(prefix + "theta", p.theta)
    if res.rates is not None:
        rep.set(prefix + "gamma_E", res.rates.gamma_E)
        rep.set(prefix + "gamma_U", res.rates.gamma_U)
    for key in ("ratio", "miss_prob_E", "miss_prob_U", "expected_missing_E", "expected_missing_U"):
        rep.set(prefix + key, res.derived[key])
    if res.not_estimable:
        rep.set(prefix + "not_estimable_lists", ",".join(map(str, res.not_estimable)))


def cmd_fit(args):
    table_E, table_U, digest = _load_pair(args.input)
    spec = FitSpec(
        variant=args.variant, model=args.model, multistart=args.multistart, seed=args.seed
    )
    res = fit(table_E, table_U, spec)
    rep = Report()
    _echo(rep, args, digest)
    rep.set("variant", args.variant)
    rep.set("model", args.model)
    rep.set("seed", args.seed)
    rep.set("multistart", args.multistart)
    _fit_block(rep, res)
    rep.add_csv(
        "cell_probabilities",
        ("pattern", "p_E", "p_U"),
        _prob_rows(res.params, res.shift_estimate),
    )
    return rep.render()


def cmd_test(args):
    table_E, table_U, digest = _load_pair(args.input)
    free_variant = "complete-free-theta" if args.regime == "complete" else "incomplete-free-theta"
    free = fit(table_E, table_U, FitSpec(variant=free_variant, model=args.model, seed=args.seed))
    dist = threesided.bootstrap_null(
        table_E,
        table_U,
        regime=args.regime,
        B=args.bootstrap,
        seed=args.seed,
        model=args.model,
        threads=args.threads,
    )
    theta_hat = free.params.theta
    deltas = args.delta if args.delta else [0.0]
    rep = Report()
    _echo(rep, args, digest)
    rep.set("regime", args.regime)
    rep.set("model", args.model)
    rep.set("bootstrap", args.bootstrap)
    rep.set("alpha", args.alpha)
    rep.set("seed", args.seed)
    rep.set("threads", args.threads)
    _fit_block(rep, free, prefix="free_")
    rep.set("null_loglik", dist.null_loglik)
    rep.set("bootstrap_failed", dist.n_failed)
    first = threesided.decide(theta_hat, dist, alpha=args.alpha, delta=deltas[0])
    rep.set("q_alpha_half", first.q_alpha_half)
    rep.set("q_alpha", first.q_alpha)
    rep.set("q_one_minus_alpha", first.q_one_minus_alpha)
    rep.set("q_one_minus_alpha_half", first.q_one_minus_alpha_half)
    rep.set("delta1", first.delta1)
    rep.set("delta2", first.delta2)
    rows = []
    for d in deltas:
        out = threesided.decide(theta_hat, dist, alpha=args.alpha, delta=d)
        rows.append(
            (d, out.reject_plus, out.reject_minus, out.reject_null, out.interpretation)
        )
    rep.add_csv(
        "decisions", ("delta", "reject_plus", "reject_minus", "reject_null", "interpretation"), rows
    )
    if args.draws_out:
        with open(args.draws_out, "w") as fh:
            fh.write("\n".join(repr(float(d)) for d in dist.draws) + "\n")
        rep.set("draws_out", args.draws_out)
    return rep.render()


def cmd_loglinear(args):
    table_E, table_U, digest = _load_pair(args.input)
    if table_E.complete or table_U.complete:
        raise ValidationError("log-linear completion expects missing-all-zero tables")
    sel = loglinear.select_model(
        (table_E, table_U), lower_p=args.lower_p, exclude_saturated=not args.include_saturated
    )
    completed, raw = loglinear.complete_tables((table_E, table_U), sel.selected.stats)
    rep = Report()
    _echo(rep, args, digest)
    rep.set("lower_p", args.lower_p)
    rep.set("exclude_saturated", not args.include_saturated)
    rows = []
    for cand in sel.candidates:
        name = "+".join(loglinear.term_name(t) for t in cand.terms) or "none"
        m_E, m_U = cand.stats
        rows.append(
            (
                name,
                m_E.dof,
                m_E.pearson_chi2,
                m_E.p_value,
                m_U.pearson_chi2,
                m_U.p_value,
                m_E.aic,
                m_U.aic,
                m_E.bic,
                m_U.bic,
                loglinear.missing_cell(m_E),
                loglinear.missing_cell(m_U),
                cand.admissible,
            )
        )
    rep.add_csv(
        "candidates",
        (
            "interactions",
            "dof",
            "chi2_E",
            "p_E",
            "chi2_U",
            "p_U",
            "aic_E",
            "aic_U",
            "bic_E",
            "bic_U",
            "missing_E",
            "missing_U",
            "admissible",
        ),
        rows,
    )
    selected_name = "+".join(loglinear.term_name(t) for t in sel.selected.terms) or "none"
    rep.set("selected_interactions", selected_name)
    rep.set("missing_E_raw", raw[0])
    rep.set("missing_U_raw", raw[1])
    rep.set("missing_E", int(completed[0].counts[0]))
    rep.set("missing_U", int(completed[1].counts[0]))
    n_E = completed[0].total_observed
    n_U = completed[1].total_observed
    rep.set("N_E", int(n_E))
    rep.set("N_U", int(n_U))
    rep.set("ratio", n_E / n_U)
    return rep.render()


def _sim_config(args):
    if args.config:
        if args.config in _BUILTIN_CONFIGS:
            cfg = dict(_BUILTIN_CONFIGS[args.config])
        else:
            text, _ = _load_text(args.config)
            try:
                cfg = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"bad config JSON: {exc}") from exc
    else:
        cfg = dict(_BUILTIN_CONFIGS[f"builtin:{args.study}-default"])
    if args.replicates is not None:
        cfg["B"] = args.replicates
    if args.seed is not None:
        cfg["seed"] = args.seed
    T_E = cfg.pop("T_E", 5000.0)
    T_U = cfg.pop("T_U", 10000.0)
    try:
        config = simstudy.SimConfig(**cfg)
    except TypeError as exc:
        raise ValidationError(f"bad config field: {exc}") from exc
    return config, T_E, T_U


def cmd_simulate(args):
    config, T_E, T_U = _sim_config(args)
    rep = Report()
    _echo(rep, args)
    rep.set("study", args.study)
    for key in (
        "J",
        "gamma_E",
        "gamma_U",
        "alpha",
        "alpha2",
        "theta_grid",
        "B",
        "seed",
        "theta_applies_to",
        "model",
    ):
        value = getattr(config, key)
        if isinstance(value, tuple):
            value = ",".join(format(v) for v in value)
        rep.set(f"config_{key}", value)
    if args.study == "bias":
        rows = simstudy.bias_study(config)
        header = ("J", "theta", "statistic", "mean", "lower", "upper", "n_used", "n_excluded")
        data = [
            (r.J, r.theta, r.statistic, r.mean, r.lower, r.upper, r.n_used, r.n_excluded)
            for r in rows
        ]
    elif args.study == "estimators":
        rows = simstudy.estimator_study(config)
        header = ("J", "theta", "statistic", "mean", "lower", "upper", "n_used", "n_excluded")
        data = [
            (r.J, r.theta, r.statistic, r.mean, r.lower, r.upper, r.n_used, r.n_excluded)
            for r in rows
        ]
    else:
        rep.set("config_T_E", T_E)
        rep.set("config_T_U", T_U)
        rows = simstudy.or_bias(config, T_E, T_U)
        header = (
            "theta",
            "naive_or",
            "corrected_or",
            "true_or",
            "corrected_closer_frac",
            "n_used",
            "n_excluded",
        )
        data = [
            (
                r.theta,
                r.naive_or,
                r.corrected_or,
                r.true_or,
                r.corrected_closer_frac,
                r.n_used,
                r.n_excluded,
            )
            for r in rows
        ]
    rep.add_csv("results", header, data)
    if args.csv_out:
        import csv as _csv

        with open(args.csv_out, "w", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(data)
        rep.set("csv_out", args.csv_out)
    return rep.render()


def _params_from_args(args):
    if args.from_report:
        text, _ = _load_text(args.from_report)
        scalars, _blocks = parse_report(text)
        J = 1
        while f"alpha_{J + 1}" in scalars:
            J += 1
        if "alpha_1" not in scalars:
            raise ValidationError("report has no alpha_1 entry")
        alpha = np.array([float(scalars[f"alpha_{j + 1}"]) for j in range(J)])
        pairs = np.zeros(n_pairs(J))
        model = "independent"
        if all(f"pair_{i + 1}_{j + 1}" in scalars for i, j in pair_indices(J)):
            pairs = np.array(
                [float(scalars[f"pair_{i + 1}_{j + 1}"]) for i, j in pair_indices(J)]
            )
            model = "dynamic"
        theta = float(scalars.get("theta", scalars.get("mu", 0.0)))
        return RaschParams(alpha=alpha, alpha2=pairs, theta=theta, model=model)
    if args.alpha is None:
        raise ValidationError("need --alpha or --from-report")
    alpha = np.array([float(v) for v in args.alpha.split(",")])
    J = alpha.size
    if args.pairs is not None:
        pairs = np.array([float(v) for v in args.pairs.split(",")])
        if pairs.size != n_pairs(J):
            raise ValidationError(f"expected {n_pairs(J)} pairwise terms, got {pairs.size}")
        model = "dynamic"
    else:
        pairs = np.zeros(n_pairs(J))
        model = "independent"
    return RaschParams(alpha=alpha, alpha2=pairs, theta=args.theta, model=model)


def cmd_probs(args):
    params = _params_from_args(args)
    delta = args.delta[0] if args.delta else 0.0
    bits = pattern_bits(params.J)
    p_hat = cell_probabilities(params, params.theta)
    p_lo = cell_probabilities(params, -delta)
    p_hi = cell_probabilities(params, delta)
    p_U = cell_probabilities(params, 0.0)
    rep = Report()
    _echo(rep, args)
    rep.set("J", params.J)
    rep.set("model", params.model)
    rep.set("theta", params.theta)
    rep.set("delta", delta)
    rows = []
    for c in range(bits.shape[0]):
        pattern = "".join(str(int(b)) for b in bits[c])
        rows.append((pattern, p_hat[c], p_lo[c], p_hi[c], p_U[c]))
    rep.add_csv(
        "probabilities",
        ("pattern", "p_E_theta", "p_E_minus_delta", "p_E_plus_delta", "p_U"),
        rows,
    )
    return rep.render()


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ascertain",
        description="Detect and correct differential ascertainment in multi-list case counts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a capture model to an exposed/unexposed pair")
    p_fit.add_argument("--input", required=True, help="CSV path or builtin:nvdrs[-completed]")
    p_fit.add_argument("--variant", default="incomplete-free-theta")
    p_fit.add_argument("--model", default="dynamic", choices=("dynamic", "independent"))
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--multistart", type=int, default=5)
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="bootstrap three-sided shift test")
    p_test.add_argument("--input", required=True)
    p_test.add_argument("--regime", default="incomplete", choices=threesided.REGIMES)
    p_test.add_argument("--model", default="dynamic", choices=("dynamic", "independent"))
    p_test.add_argument("--bootstrap", type=int, default=threesided.DEFAULT_B)
    p_test.add_argument("--alpha", type=float, default=threesided.DEFAULT_ALPHA)
    p_test.add_argument("--delta", type=float, action="append")
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--threads", type=int, default=1)
    p_test.add_argument("--draws-out", default=None)
    p_test.set_defaults(func=cmd_test)

    p_log = sub.add_parser("loglinear", help="capture-recapture completion of the all-zero cell")
    p_log.add_argument("--input", required=True)
    p_log.add_argument("--lower-p", type=float, default=0.05)
    p_log.add_argument("--include-saturated", action="store_true")
    p_log.set_defaults(func=cmd_loglinear)

    p_sim = sub.add_parser("simulate", help="run a simulation study")
    p_sim.add_argument("--study", required=True, choices=("bias", "estimators", "or"))
    p_sim.add_argument("--config", default=None, help="JSON path or builtin:<study>-default")
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--csv-out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_probs = sub.add_parser("probs", help="cell probabilities at given parameters")
    p_probs.add_argument("--alpha", default=None, help="comma-separated list strengths")
    p_probs.add_argument("--pairs", default=None, help="comma-separated pairwise terms")
    p_probs.add_argument("--theta", type=float, default=0.0)
    p_probs.add_argument("--delta", type=float, action="append")
    p_probs.add_argument("--from-report", default=None)
    p_probs.set_defaults(func=cmd_probs)

    for p in (p_fit, p_test, p_log, p_sim, p_probs):
        p.add_argument("--out", default=None, help="write the report here instead of stdout")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
