"""Replicated experiment protocols and flat report records.

Each protocol generates synthetic datasets (or consumes a real one), runs a
set of estimators, and emits one record per (replicate, k, estimator, metric,
exercise).  Replicates draw their seeds through ``replicate_seed``, so reports
are bit-reproducible for a given base seed and independent of how many worker
processes compute them.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from peergrade.cardinal import (
    EmConfig,
    Hyperparams,
    ModelFit,
    mean_estimate,
    median_estimate,
    umt_fit,
    ust_fit,
)
from peergrade.data import Dataset, GradeRole, TruthSet, induce_ballots
from peergrade.errors import EstimatorError, PeergradeError
from peergrade.metrics import per_exercise_errors
from peergrade.ordinal import (
    GammaPrior,
    NormalPrior,
    SgdConfig,
    borda,
    bt_fit,
    pl_fit,
    thurstone_fit,
)
from peergrade.supervised import smt_fit, sn_estimate, split_submissions
from peergrade.synth import (
    apply_overrides,
    generate,
    perturb_truth,
    protocol_config,
    replicate_seed,
)

PROTOCOLS = (
    "fig1_left",
    "fig1_right",
    "fig2_left",
    "fig2_right",
    "noisy_truth",
    "real_data_eval",
)
CARDINAL_ESTIMATORS = ("mean", "median", "ust", "umt")
ORDINAL_ESTIMATORS = ("borda", "bt", "thurstone", "pl")

REPORT_COLUMNS = (
    "protocol",
    "replicate",
    "k",
    "estimator",
    "reliability_mode",
    "role_group",
    "metric",
    "exercise",
    "value",
)


@dataclass(frozen=True)
class ReportRecord:
    protocol: str
    replicate: int
    k: int | None
    estimator: str
    reliability_mode: str
    role_group: str
    metric: str
    exercise: str
    value: float

    def row(self):
        return [
            self.protocol,
            str(self.replicate),
            "" if self.k is None else str(self.k),
            self.estimator,
            self.reliability_mode,
            self.role_group,
            self.metric,
            self.exercise,
            repr(self.value),
        ]


@dataclass
class ExperimentSpec:
    protocol: str
    replicates: int = 100
    k_values: tuple[int, ...] = ()
    estimators: tuple[str, ...] = ()
    base_seed: int = 0
    noise_sd: float = 0.05
    jobs: int = 1
    generator_overrides: dict = field(default_factory=dict)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    em: EmConfig = field(default_factory=EmConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    rel_prior: GammaPrior = field(default_factory=GammaPrior)
    split_fraction: float = 0.5
    ta_reliability: float = 1000.0

    def normalized(self) -> "ExperimentSpec":
        """Fill protocol-dependent defaults and validate."""
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r} (expected one of {PROTOCOLS})")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        spec = replace(self)
        if not spec.k_values:
            if spec.protocol in ("fig1_left", "fig1_right", "noisy_truth"):
                spec = replace(spec, k_values=tuple(range(1, 10)))
            else:
                spec = replace(spec, k_values=(6,))
        if not spec.estimators:
            if spec.protocol in ("fig1_left", "fig1_right", "noisy_truth"):
                spec = replace(spec, estimators=CARDINAL_ESTIMATORS)
            elif spec.protocol in ("fig2_left", "fig2_right"):
                spec = replace(spec, estimators=("mean",) + ORDINAL_ESTIMATORS)
            else:
                spec = replace(spec, estimators=("mean", "median", "ust", "umt", "bt"))
        unknown = [
            e
            for e in spec.estimators
            if e not in CARDINAL_ESTIMATORS + ORDINAL_ESTIMATORS + ("sn", "smt")
        ]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}")
        return spec

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    records: list[ReportRecord]


def _fit_cardinal_scores(name, dataset, spec):
    if name == "mean":
        return mean_estimate(dataset).scores
    if name == "median":
        return median_estimate(dataset).scores
    if name == "umt":
        return umt_fit(dataset, spec.hyper, spec.em).scores
    if name == "ust":
        scores = {}
        for exercise in dataset.exercises:
            scores.update(ust_fit(dataset, exercise, spec.hyper, spec.em).scores)
        return scores
    raise ValueError(f"not a cardinal estimator: {name!r}")


def _cardinal_replicate(spec: ExperimentSpec, rep: int) -> list[ReportRecord]:
    records = []
    rep_seed = replicate_seed(spec.base_seed, rep)
    for k in spec.k_values:
        seed = replicate_seed(rep_seed, k)
        config = apply_overrides(protocol_config(spec.protocol, k, seed), spec.generator_overrides)
        dataset, truth = generate(config)
        eval_truth = truth
        if spec.protocol == "noisy_truth" and spec.noise_sd > 0:
            eval_truth = perturb_truth(truth, spec.noise_sd, replicate_seed(seed, 9001))
        for estimator in spec.estimators:
            scores = _fit_cardinal_scores(estimator, dataset, spec)
            for metric in ("l2", "kendall"):
                for exercise, value in per_exercise_errors(scores, eval_truth, metric).items():
                    records.append(
                        ReportRecord(
                            spec.protocol, rep, k, estimator, "", "peer",
                            metric, exercise, value,
                        )
                    )
    return records


def _sample_priors(dataset: Dataset, roles=(GradeRole.PEER,)) -> dict[str, NormalPrior]:
    """Per-exercise Normal priors from the sample mean/variance of the grades."""
    roles = frozenset(roles)
    per: dict[str, list[float]] = {}
    for g in dataset.grades:
        if g.role in roles:
            per.setdefault(g.exercise, []).append(g.value)
    priors = {}
    for e, vals in per.items():
        mean = float(np.mean(vals))
        var = float(np.var(vals, ddof=1)) if len(vals) > 1 else 1.0 / 36.0
        priors[e] = NormalPrior(mean, var if var > 0 else 1.0 / 36.0)
    return priors


def _ordinal_replicate(spec: ExperimentSpec, rep: int) -> list[ReportRecord]:
    records = []
    rep_seed = replicate_seed(spec.base_seed, rep)
    k = spec.k_values[0]
    seed = replicate_seed(rep_seed, k)
    config = apply_overrides(protocol_config(spec.protocol, k, seed), spec.generator_overrides)
    dataset, truth = generate(config)
    ballots = induce_ballots(dataset, (GradeRole.PEER,))
    priors = _sample_priors(dataset)

    for estimator in spec.estimators:
        if estimator in CARDINAL_ESTIMATORS:
            scores = _fit_cardinal_scores(estimator, dataset, spec)
            for exercise, value in per_exercise_errors(scores, truth, "kendall").items():
                records.append(
                    ReportRecord(spec.protocol, rep, k, estimator, "", "peer",
                                 "kendall", exercise, value)
                )
            continue
        modes = ("off",) if estimator == "borda" else ("off", "on")
        for mode in modes:
            fit = _fit_ordinal(estimator, ballots, priors, spec, seed, estimate_reliability=(mode == "on"))
            for exercise, value in per_exercise_errors(fit.latent, truth, "kendall").items():
                records.append(
                    ReportRecord(spec.protocol, rep, k, estimator, mode, "peer",
                                 "kendall", exercise, value)
                )
    return records


def _fit_ordinal(name, ballots, priors, spec, seed, estimate_reliability):
    if name == "borda":
        return borda(ballots)
    offset = {"bt": 101, "thurstone": 102, "pl": 103}[name] + (500 if estimate_reliability else 0)
    sgd = replace(spec.sgd, seed=replicate_seed(seed, offset))
    fitter = {"bt": bt_fit, "thurstone": thurstone_fit, "pl": pl_fit}[name]
    return fitter(ballots, priors, spec.rel_prior, sgd, estimate_reliability)


def run_fig1(spec: ExperimentSpec) -> ExperimentReport:
    """Cardinal estimators on generated data over a grid of grades-per-submission."""
    spec = spec.normalized()
    if spec.protocol not in ("fig1_left", "fig1_right"):
        raise ValueError(f"run_fig1 expects a fig1 protocol, got {spec.protocol!r}")
    return _run_replicated(spec, _cardinal_replicate)


def run_noisy_truth(spec: ExperimentSpec) -> ExperimentReport:
    """Same generation/fitting as the cardinal protocol, but the truth used
    for error computation is perturbed with Gaussian noise (fitting unchanged)."""
    spec = spec.normalized()
    if spec.protocol != "noisy_truth":
        raise ValueError(f"run_noisy_truth expects protocol 'noisy_truth', got {spec.protocol!r}")
    return _run_replicated(spec, _cardinal_replicate)


def run_fig2(spec: ExperimentSpec) -> ExperimentReport:
    """Ordinal estimators (with and without reliability estimation) against the
    cardinal mean baseline, on rankings induced from generated grades."""
    spec = spec.normalized()
    if spec.protocol not in ("fig2_left", "fig2_right"):
        raise ValueError(f"run_fig2 expects a fig2 protocol, got {spec.protocol!r}")
    return _run_replicated(spec, _ordinal_replicate)


def _run_replicated(spec, replicate_fn) -> ExperimentReport:
    if spec.jobs > 1 and spec.replicates > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            chunks = list(pool.map(_worker, [(replicate_fn, spec, r) for r in range(spec.replicates)]))
    else:
        chunks = [replicate_fn(spec, r) for r in range(spec.replicates)]
    records = [rec for chunk in chunks for rec in chunk]
    return ExperimentReport(spec=spec, records=records)


def _worker(args):
    replicate_fn, spec, rep = args
    return replicate_fn(spec, rep)


def run_real_eval(dataset: Dataset, truth: TruthSet, spec: ExperimentSpec) -> ExperimentReport:
    """Per role-group evaluation on a real (or real-shaped) dataset.

    Role groups are self-only, peer-only, and self+peer.  Ordinal estimators
    are skipped for the self-only group (a single self grade per grader
    induces no ranking).  Supervised estimators are evaluated only on their
    test-split submissions.
    """
    spec = spec.normalized()
    records = []
    role_groups = (
        ("self", (GradeRole.SELF,)),
        ("peer", (GradeRole.PEER,)),
        ("self+peer", (GradeRole.SELF, GradeRole.PEER)),
    )
    split = split_submissions(truth.scores, spec.split_fraction, replicate_seed(spec.base_seed, 0))
    for group_name, roles in role_groups:
        for estimator in spec.estimators:
            try:
                scores = _fit_real(estimator, dataset, truth, roles, group_name, split, spec)
            except _SkipEstimator:
                continue
            for metric in ("l2", "kendall"):
                per_ex = per_exercise_errors(scores, truth, metric)
                for exercise, value in per_ex.items():
                    records.append(
                        ReportRecord(spec.protocol, 0, None, estimator, "", group_name,
                                     metric, exercise, value)
                    )
    return ExperimentReport(spec=spec, records=records)


class _SkipEstimator(PeergradeError):
    pass


def _fit_real(estimator, dataset, truth, roles, group_name, split, spec):
    if estimator in ("mean", "median"):
        fn = mean_estimate if estimator == "mean" else median_estimate
        return fn(dataset, roles).scores
    if estimator == "umt":
        return umt_fit(dataset, spec.hyper, spec.em, roles).scores
    if estimator == "ust":
        scores = {}
        for exercise in dataset.exercises:
            scores.update(ust_fit(dataset, exercise, spec.hyper, spec.em, roles).scores)
        return scores
    if estimator in ORDINAL_ESTIMATORS:
        if group_name == "self":
            # one self grade per grader implies no ranking
            raise _SkipEstimator(estimator)
        ballots = list(dataset.ballots) + induce_ballots(dataset, roles)
        if not ballots:
            raise _SkipEstimator(estimator)
        priors = _sample_priors(dataset, roles)
        fit = _fit_ordinal(estimator, ballots, priors, spec, spec.base_seed, False)
        return fit.latent
    if estimator == "sn":
        fit = sn_estimate(dataset, truth, split, roles)
        return fit.scores
    if estimator == "smt":
        fit = smt_fit(
            dataset, truth, split.train, spec.hyper, spec.ta_reliability, spec.em, roles
        )
        return {key: v for key, v in fit.scores.items() if key in split.test}
    raise ValueError(f"unknown estimator {estimator!r}")


def filter_exercises(errors: dict, band: str = "easy", quantile: float = 0.5) -> frozenset[str]:
    """Select the easiest- or hardest-to-grade exercises by baseline error.

    ``quantile`` is interpreted as the fraction of exercises selected:
    ``easy`` takes the floor(quantile * n) lowest-error exercises, and
    ``difficult`` the same count from the top.  ``quantile=1.0`` selects all,
    ``quantile=0.0`` none.
    """
    if band not in ("easy", "difficult"):
        raise ValueError(f"unknown band {band!r}")
    if not 0.0 <= quantile <= 1.0:
        raise ValueError("quantile must be in [0, 1]")
    ranked = sorted(errors.items(), key=lambda kv: (kv[1], kv[0]))
    if band == "difficult":
        ranked.reverse()
    n_take = int(quantile * len(ranked))
    return frozenset(e for e, _ in ranked[:n_take])


def mean_baseline_errors(report: ExperimentReport, metric: str = "l2") -> dict[str, float]:
    """Per-exercise mean-estimator error averaged over a report's replicates."""
    acc: dict[str, list[float]] = {}
    for rec in report.records:
        if rec.estimator == "mean" and rec.metric == metric:
            acc.setdefault(rec.exercise, []).append(rec.value)
    if not acc:
        raise EstimatorError("report has no mean-estimator records for this metric")
    return {e: float(np.mean(v)) for e, v in sorted(acc.items())}


def run_experiment(spec: ExperimentSpec, dataset=None, truth=None) -> ExperimentReport:
    """Dispatch on the protocol name."""
    spec = spec.normalized()
    if spec.protocol in ("fig1_left", "fig1_right"):
        return run_fig1(spec)
    if spec.protocol in ("fig2_left", "fig2_right"):
        return run_fig2(spec)
    if spec.protocol == "noisy_truth":
        return run_noisy_truth(spec)
    if dataset is None or truth is None:
        raise ValueError("real_data_eval needs a dataset and a truth set")
    return run_real_eval(dataset, truth, spec)


def write_report(report: ExperimentReport, out_dir: str) -> None:
    """Write report.csv and report_meta.json (deterministic bytes)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for rec in report.records:
            writer.writerow(rec.row())
    with open(os.path.join(out_dir, "report_meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"spec": report.spec.to_dict(), "records": len(report.records)}, fh, indent=2)
        fh.write("\n")


def load_report_records(path: str):
    """Read back report.csv rows as ReportRecord values."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                ReportRecord(
                    protocol=row["protocol"],
                    replicate=int(row["replicate"]),
                    k=int(row["k"]) if row["k"] else None,
                    estimator=row["estimator"],
                    reliability_mode=row["reliability_mode"],
                    role_group=row["role_group"],
                    metric=row["metric"],
                    exercise=row["exercise"],
                    value=float(row["value"]),
                )
            )
    return out
