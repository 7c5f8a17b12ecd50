"""Command-line entry point.

Subcommands: generate | fit | evaluate | experiment | analyze.
Exit codes: 0 success, 1 domain error, 2 usage error.

Flags can also be supplied through a JSON config file (``--config``); keys
mirror the long flag names with underscores, and explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from peergrade import __version__
from peergrade._kernels import BACKEND
from peergrade.cardinal import (
    EmConfig,
    Hyperparams,
    ModelFit,
    load_fit,
    mean_estimate,
    median_estimate,
    save_fit,
    umt_fit,
    ust_fit,
)
from peergrade.data import (
    GradeRole,
    induce_ballots,
    load_dataset,
    load_truth,
    save_dataset,
    save_truth,
    ta_truth,
)
from peergrade.errors import PeergradeError
from peergrade.experiments import (
    ExperimentSpec,
    run_experiment,
    write_report,
)
from peergrade.metrics import per_exercise_errors
from peergrade.ordinal import SgdConfig, borda, bt_fit, pl_fit, thurstone_fit
from peergrade.supervised import (
    correlation_report,
    exam_reliability_fit,
    grader_diagnostics,
    smt_fit,
    sn_estimate,
    split_submissions,
)
from peergrade.synth import (
    GeneratorConfig,
    apply_overrides,
    config_to_dict,
    generate,
    protocol_config,
)

DATA_SCHEMA = """\
dataset directory (CSV, one file per record kind, header row; files for
empty record kinds are omitted):
  exercises.csv  exercise,max_points
  groups.csv     submission,grader
  grades.csv     exercise,submission,grader,role,value   (role: self|peer|ta)
  ballots.csv    exercise,grader,position,submission     (position 0 = worst)
  exams.csv      grader,exam_grade
truth files: truth.csv with exercise,submission,true_score
JSON datasets: one document with arrays exercises/groups/grades/ballots/exams
mirroring the CSV fields.
"""

REPORT_SCHEMA = """\
report.csv columns:
  protocol,replicate,k,estimator,reliability_mode,role_group,metric,exercise,value
plus report_meta.json echoing the full experiment spec and seed.
"""

MODELS = (
    "mean", "median", "ust", "umt",
    "borda", "bt", "thurstone", "pl",
    "sn", "smt", "exam-direct", "exam-hybrid",
)
ORDINAL = ("borda", "bt", "thurstone", "pl")
GEN_PROTOCOLS = ("fig1-left", "fig1-right", "fig2-left", "fig2-right", "custom")
EXP_PROTOCOLS = ("fig1-left", "fig1-right", "fig2-left", "fig2-right", "noisy-truth", "real-data-eval")


def _parse_roles(text: str):
    roles = []
    for token in text.split(","):
        token = token.strip()
        if token not in ("self", "peer", "ta"):
            raise PeergradeError(f"unknown role {token!r} (expected self, peer or ta)")
        roles.append(GradeRole(token))
    return tuple(roles)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peergrade",
        description="Peer-grade aggregation: synthetic benchmarks, model fits, "
        "evaluation and grader diagnostics.",
        epilog=DATA_SCHEMA + REPORT_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"peergrade {__version__} ({BACKEND} backend)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate",
        help="generate a synthetic dataset (CSV schema + truth.csv + config.json)",
        epilog=DATA_SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--protocol", choices=GEN_PROTOCOLS, default="custom")
    p.add_argument("--k", type=int, default=6, help="peer grades per submission")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--submissions", type=int, default=100)
    p.add_argument("--graders", type=int, default=100)
    p.add_argument("--exercises", type=int, default=5)
    p.add_argument("--truth-model", choices=("normal", "weibull"), default="normal")
    p.add_argument("--bias-sd", type=float, default=1.0 / 8.0)
    p.add_argument("--random-graders", type=int, default=0)
    p.add_argument("--clip", action=argparse.BooleanOptionalAction, default=True,
                   help="clip grades and truth to [0,1]")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser(
        "fit",
        help="fit one estimator on a dataset and write fit.json",
        epilog=DATA_SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--data", required=True, help="dataset directory (csv) or file (json)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--model", required=True, choices=MODELS)
    p.add_argument("--roles", default="peer", help="comma-separated subset of self,peer,ta")
    p.add_argument("--hyper-file", help="JSON file with prior parameters "
                   "(mu_score, var_score, var_bias, alpha, beta)")
    p.add_argument("--truth", help="truth.csv for supervised models (default: TA grades)")
    p.add_argument("--split-fraction", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--ta-reliability", type=float, default=1000.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--sgd-seed", type=int, default=0)
    p.add_argument("--estimate-reliability", action="store_true")
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="compare a fit against a truth file")
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--fit", required=True, help="fit.json path")
    p.add_argument("--truth", required=True, help="truth.csv path")
    p.add_argument("--metric", choices=("l2", "kendall", "both"), default="both")
    p.add_argument("--per-exercise", action="store_true")
    p.add_argument("--out", help="optional CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "experiment",
        help="run a replicated protocol and write report.csv",
        epilog=REPORT_SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--protocol", required=True, choices=EXP_PROTOCOLS)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--k", type=int, nargs="+", help="grades-per-submission grid")
    p.add_argument("--estimators", help="comma-separated estimator subset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    p.add_argument("--noise-sd", type=float, default=0.05, help="truth noise for noisy-truth")
    p.add_argument("--data", help="dataset directory (real-data-eval only)")
    p.add_argument("--truth", help="truth.csv (real-data-eval; default: TA grades)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("analyze", help="grader diagnostics and correlation report")
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--data", required=True, help="dataset directory (csv) or file (json)")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="output format for the analysis files")
    p.add_argument("--truth", help="truth.csv (default: TA grades when present)")
    p.add_argument("--roles", default="peer")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    return parser


def _merge_config(args, argv) -> int:
    """Apply config-file values for flags not given on the command line."""
    if not getattr(args, "config", None):
        return 0
    with open(args.config, "r", encoding="utf-8") as fh:
        values = json.load(fh)
    for key, value in values.items():
        flag = "--" + key.replace("_", "-")
        if not hasattr(args, key.replace("-", "_")):
            print(f"error: unknown config key {key!r}", file=sys.stderr)
            return 2
        given = any(tok == flag or tok.startswith(flag + "=") for tok in argv)
        if not given:
            setattr(args, key.replace("-", "_"), value)
    return 0


def _load_hyper(path) -> Hyperparams:
    if not path:
        return Hyperparams()
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return Hyperparams(**doc)


def cmd_generate(args) -> int:
    if args.protocol == "custom":
        config = GeneratorConfig(
            n_submissions=args.submissions,
            n_graders=args.graders,
            n_exercises=args.exercises,
            grades_per_submission=args.k,
            seed=args.seed,
            bias_sd=args.bias_sd,
            n_random_graders=args.random_graders,
            clip_to_unit=args.clip,
        )
        if args.truth_model == "weibull":
            config = apply_overrides(config, {"truth_model": {"kind": "weibull"}})
    else:
        config = protocol_config(args.protocol.replace("-", "_"), args.k, args.seed)

    dataset, truth = generate(config)
    os.makedirs(args.out, exist_ok=True)
    if args.format == "csv":
        save_dataset(dataset, args.out, "csv")
    else:
        save_dataset(dataset, os.path.join(args.out, "dataset.json"), "json")
    save_truth(truth, os.path.join(args.out, "truth.csv"))
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(dataset.grades)} grades, {len(dataset.submissions)} submissions to {args.out}")
    return 0


def _load_data(args):
    # a directory holds the CSV schema; a single file is the JSON document
    if os.path.isdir(args.data):
        return load_dataset(args.data, "csv")
    return load_dataset(args.data, "json")


def cmd_fit(args) -> int:
    dataset = _load_data(args)
    roles = _parse_roles(args.roles)
    hyper = _load_hyper(args.hyper_file)
    em = EmConfig()
    model = args.model

    if model == "mean":
        fit = mean_estimate(dataset, roles)
    elif model == "median":
        fit = median_estimate(dataset, roles)
    elif model == "ust":
        parts = [ust_fit(dataset, e, hyper, em, roles) for e in dataset.exercises]
        fit = parts[0]
        for part in parts[1:]:
            fit.scores.update(part.scores)
            fit.iterations = max(fit.iterations, part.iterations)
            fit.converged = fit.converged and part.converged
        if len(parts) > 1:
            # grader parameters are per exercise; they do not fit the flat
            # fit.json grader table, so only the scores are serialized
            fit.bias = {}
            fit.reliability = {}
            fit.objective_trace = []
            fit.meta["per_exercise_grader_parameters"] = "not serialized"
    elif model == "umt":
        fit = umt_fit(dataset, hyper, em, roles)
    elif model in ORDINAL:
        ballots = list(dataset.ballots) + induce_ballots(dataset, roles)
        if not ballots:
            if set(roles) == {GradeRole.SELF}:
                raise PeergradeError("self grades induce no rankings")
            raise PeergradeError("no ballots available for an ordinal fit")
        sgd = SgdConfig(step=args.step, epochs=args.epochs, seed=args.sgd_seed)
        if model == "borda":
            ofit = borda(ballots)
        else:
            fitter = {"bt": bt_fit, "thurstone": thurstone_fit, "pl": pl_fit}[model]
            ofit = fitter(ballots, sgd=sgd, estimate_reliability=args.estimate_reliability)
        fit = ofit.to_model_fit()
    elif model in ("sn", "smt"):
        truth = load_truth(args.truth) if args.truth else ta_truth(dataset)
        split = split_submissions(truth.scores, args.split_fraction, args.split_seed)
        if model == "sn":
            fit = sn_estimate(dataset, truth, split, roles)
        else:
            fit = smt_fit(dataset, truth, split.train, hyper, args.ta_reliability, em, roles)
    else:  # exam-direct / exam-hybrid
        fit = exam_reliability_fit(dataset, model.split("-")[1], hyper, em, roles)

    fit.meta.setdefault("hyper", {
        "mu_score": hyper.mu_score, "var_score": hyper.var_score,
        "var_bias": hyper.var_bias, "alpha": hyper.alpha, "beta": hyper.beta,
    })
    save_fit(fit, args.out)
    status = "converged" if fit.converged else "not converged"
    print(f"{model}: {len(fit.scores)} scores, {fit.iterations} iterations, {status} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    fit = load_fit(args.fit)
    truth = load_truth(args.truth)
    metrics = ("l2", "kendall") if args.metric == "both" else (args.metric,)
    rows = []
    for metric in metrics:
        per_ex = per_exercise_errors(fit.scores, truth, metric)
        if args.per_exercise:
            for exercise, value in sorted(per_ex.items()):
                rows.append([metric, exercise, value])
        agg = sum(per_ex.values()) / len(per_ex) if per_ex else float("nan")
        rows.append([metric, "(all)", agg])
    width = max(len(r[1]) for r in rows)
    for metric, exercise, value in rows:
        print(f"{metric:8s} {exercise:{width}s} {value:.6f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "exercise", "value"])
            for metric, exercise, value in rows:
                writer.writerow([metric, exercise, repr(value)])
    return 0


def cmd_experiment(args) -> int:
    protocol = args.protocol.replace("-", "_")
    spec = ExperimentSpec(
        protocol=protocol,
        replicates=args.replicates,
        k_values=tuple(args.k) if args.k else (),
        estimators=tuple(args.estimators.split(",")) if args.estimators else (),
        base_seed=args.seed,
        noise_sd=args.noise_sd,
        jobs=args.jobs,
    )
    dataset = truth = None
    if protocol == "real_data_eval":
        if not args.data:
            raise PeergradeError("real-data-eval needs --data")
        dataset = load_dataset(args.data, "csv")
        truth = load_truth(args.truth) if args.truth else ta_truth(dataset)
    report = run_experiment(spec, dataset, truth)
    write_report(report, args.out)
    print(f"wrote {len(report.records)} records to {os.path.join(args.out, 'report.csv')}")
    return 0


def cmd_analyze(args) -> int:
    dataset = _load_data(args)
    roles = _parse_roles(args.roles)
    diag = grader_diagnostics(dataset)

    truth = None
    if args.truth:
        truth = load_truth(args.truth)
    else:
        try:
            truth = ta_truth(dataset)
        except PeergradeError:
            truth = None

    correlations = {}
    if truth is not None:
        correlations = correlation_report(dataset, truth, roles)

    os.makedirs(args.out, exist_ok=True)
    if args.format == "json":
        doc = {
            "graders": [
                {
                    "grader": g,
                    "mean_given_grade": d.mean_given_grade,
                    "deviation_bias": d.deviation_bias,
                    "deviation_variance": d.deviation_variance,
                    "n_deviations": d.n_deviations,
                }
                for g, d in sorted(diag.per_grader.items())
            ],
            "skipped_graders": sorted(diag.skipped),
            "correlations": correlations,
        }
        path = os.path.join(args.out, "analysis.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        print(f"wrote {path}")
    else:
        path = os.path.join(args.out, "analysis.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["grader", "mean_given_grade", "deviation_bias",
                             "deviation_variance", "n_deviations"])
            for g, d in sorted(diag.per_grader.items()):
                writer.writerow([g, repr(d.mean_given_grade), repr(d.deviation_bias),
                                 repr(d.deviation_variance), str(d.n_deviations)])
        print(f"wrote {path}")
        if correlations:
            cpath = os.path.join(args.out, "correlations.csv")
            with open(cpath, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["coefficient", "value"])
                for key, value in sorted(correlations.items()):
                    writer.writerow([key, repr(value)])
            print(f"wrote {cpath}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    rc = _merge_config(args, argv)
    if rc:
        return rc
    try:
        return args.func(args)
    except PeergradeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
