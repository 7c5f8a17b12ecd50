"""Estimators and analyses that use partial ground truth.

Includes the bias-corrected mean (train/test split, grader biases estimated
against truth on the training half), truth-anchored joint fits (trusted
grades injected as high-reliability pseudo observations), exam-based
reliability variants, per-grader deviation diagnostics, and the correlation
report linking homework performance, grading bias and exam grades.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from peergrade.cardinal import (
    EmConfig,
    Hyperparams,
    ModelFit,
    _fit_em,
    umt_fit,
)
from peergrade.data import Dataset, GradeRole, TruthSet, as_roles
from peergrade.errors import EstimatorError, MetricError
from peergrade.metrics import pearson_r


@dataclass(frozen=True)
class TrainTestSplit:
    """Disjoint train/test partition of (exercise, submission) keys."""

    train: frozenset[tuple[str, str]]
    test: frozenset[tuple[str, str]]
    seed: int
    fraction: float


def split_submissions(keys, fraction: float = 0.5, seed: int = 0) -> TrainTestSplit:
    """Random split, stratified per exercise, deterministic given the seed."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    by_ex: dict[str, list[tuple[str, str]]] = {}
    for key in sorted(keys):
        by_ex.setdefault(key[0], []).append(key)
    rng = np.random.Generator(np.random.PCG64(seed))
    train, test = set(), set()
    for e in sorted(by_ex):
        ks = by_ex[e]
        n_train = int(len(ks) * fraction + 0.5)
        perm = rng.permutation(len(ks))
        for rank, i in enumerate(perm):
            (train if rank < n_train else test).add(ks[i])
    return TrainTestSplit(frozenset(train), frozenset(test), seed, fraction)


@dataclass
class BiasEstimate:
    """Per-grader bias (mean of grade minus truth) with zero-support flags."""

    values: dict
    zero_support: frozenset = field(default_factory=frozenset)

    def get(self, key, default=0.0):
        return self.values.get(key, default)


def estimate_grader_bias(
    dataset: Dataset,
    truth: TruthSet,
    train=None,
    roles=(GradeRole.PEER,),
    per_exercise: bool = False,
) -> BiasEstimate:
    """Sample-mean bias per grader: mean over the grader's training grades of
    (reported value - true score).

    ``train`` restricts to a set of (exercise, submission) keys (default: all
    with truth).  Graders who graded nothing usable get bias 0 and are listed
    in ``zero_support``.  With ``per_exercise`` the map is keyed by
    (exercise, grader) instead.
    """
    roles = as_roles(roles)
    train = None if train is None else set(train)
    diffs: dict = {}
    graders = set()
    for g in dataset.grades:
        if g.role not in roles:
            continue
        graders.add(g.grader)
        key = (g.exercise, g.submission)
        if key not in truth.scores:
            continue
        if train is not None and key not in train:
            continue
        bucket = (g.exercise, g.grader) if per_exercise else g.grader
        diffs.setdefault(bucket, []).append(g.value - truth.scores[key])

    values = {b: float(np.mean(d)) for b, d in diffs.items()}
    if per_exercise:
        covered = {g for (_, g) in values}
    else:
        covered = set(values)
    zero = frozenset(graders - covered)
    if per_exercise:
        for e in dataset.exercises:
            for g in graders:
                values.setdefault((e, g), 0.0)
    else:
        for g in zero:
            values[g] = 0.0
    return BiasEstimate(dict(sorted(values.items())), zero)


def sn_estimate(
    dataset: Dataset,
    truth: TruthSet,
    split: TrainTestSplit,
    roles=(GradeRole.PEER,),
    per_exercise: bool = False,
) -> ModelFit:
    """Bias-corrected mean on the test set.

    Biases come from the training half; each test submission's estimate is the
    mean of (grade - grader bias) over its graders.
    """
    roles = as_roles(roles)
    bias = estimate_grader_bias(dataset, truth, split.train, roles, per_exercise)
    per_sub: dict[tuple[str, str], list[float]] = {}
    for g in dataset.grades:
        if g.role not in roles:
            continue
        key = (g.exercise, g.submission)
        if key not in split.test:
            continue
        b = bias.get((g.exercise, g.grader) if per_exercise else g.grader)
        per_sub.setdefault(key, []).append(g.value - b)

    missing = sorted(set(split.test) - set(per_sub))
    if missing:
        raise EstimatorError(f"test submissions without usable grades: {missing[:5]}")
    scores = {key: float(np.mean(vs)) for key, vs in per_sub.items()}
    return ModelFit(
        model="sn",
        scores=dict(sorted(scores.items())),
        bias=dict(bias.values) if not per_exercise else {},
        reliability={},
        objective_trace=[],
        iterations=0,
        converged=True,
        meta={
            "roles": sorted(r.value for r in roles),
            "train_size": len(split.train),
            "test_size": len(split.test),
            "zero_support": sorted(bias.zero_support),
            "per_exercise_bias": per_exercise,
        },
    )


def smt_fit(
    dataset: Dataset,
    truth: TruthSet,
    anchored,
    hyper: Hyperparams = Hyperparams(),
    ta_reliability: float = 1000.0,
    em: EmConfig = EmConfig(),
    roles=(GradeRole.PEER,),
) -> ModelFit:
    """Joint fit with trusted grades injected for the anchored submissions.

    Each anchored (exercise, submission) contributes one extra observation
    from a pseudo-grader whose reliability is fixed at ``ta_reliability`` and
    whose bias is fixed at zero; the EM never updates it.  Evaluation should
    use only submissions outside ``anchored``.
    """
    anchored = set(anchored)
    missing = sorted(k for k in anchored if k not in truth.scores)
    if missing:
        raise EstimatorError(f"anchored submissions without truth: {missing[:5]}")
    anchors = {key: truth.scores[key] for key in anchored}
    fit = _fit_em(
        dataset,
        dataset.exercises,
        hyper,
        em,
        roles,
        anchors=anchors,
        anchor_reliability=ta_reliability,
        model_name="smt",
    )
    fit.meta["anchored"] = sorted(anchored)
    fit.meta["ta_reliability"] = ta_reliability
    return fit


def mean_deviation(dataset: Dataset, truth: TruthSet, roles=(GradeRole.PEER,)) -> dict:
    """Per grader: mean of |(grade - bias) - truth| over all graded submissions
    with truth, using the grader's global bias estimate."""
    roles = as_roles(roles)
    bias = estimate_grader_bias(dataset, truth, None, roles)
    devs: dict[str, list[float]] = {}
    for g in dataset.grades:
        if g.role not in roles:
            continue
        key = (g.exercise, g.submission)
        if key not in truth.scores:
            continue
        devs.setdefault(g.grader, []).append(
            abs((g.value - bias.get(g.grader)) - truth.scores[key])
        )
    return {g: float(np.mean(d)) for g, d in sorted(devs.items())}


@dataclass(frozen=True)
class GraderDiagnostic:
    """Deviation-from-other-graders summary for one grader."""

    mean_given_grade: float
    deviation_bias: float       # sample mean of (own grade - mean of others)
    deviation_variance: float   # sample variance of the same deviations
    n_deviations: int


@dataclass
class DiagnosticsReport:
    per_grader: dict[str, GraderDiagnostic]
    skipped: frozenset[str]


def grader_diagnostics(dataset: Dataset, roles=None) -> DiagnosticsReport:
    """Per-grader bias/consistency proxies without any ground truth.

    For every grade on a submission with at least one other grade, the
    deviation is (own grade - mean of the other grades).  A grader needs at
    least two such deviations; everyone else lands in ``skipped``.
    """
    roles = None if roles is None else as_roles(roles)
    per_sub: dict[str, list] = {}
    per_grader_values: dict[str, list[float]] = {}
    for g in dataset.grades:
        if roles is not None and g.role not in roles:
            continue
        per_sub.setdefault(g.submission, []).append(g)
        per_grader_values.setdefault(g.grader, []).append(g.value)

    deviations: dict[str, list[float]] = {}
    for sub, recs in per_sub.items():
        if len(recs) < 2:
            continue
        total = sum(r.value for r in recs)
        for r in recs:
            other_mean = (total - r.value) / (len(recs) - 1)
            deviations.setdefault(r.grader, []).append(r.value - other_mean)

    per_grader = {}
    skipped = set()
    for g in sorted(per_grader_values):
        devs = deviations.get(g, [])
        if len(devs) < 2:
            skipped.add(g)
            continue
        arr = np.asarray(devs)
        per_grader[g] = GraderDiagnostic(
            mean_given_grade=float(np.mean(per_grader_values[g])),
            deviation_bias=float(arr.mean()),
            deviation_variance=float(arr.var(ddof=1)),
            n_deviations=len(devs),
        )
    return DiagnosticsReport(per_grader, frozenset(skipped))


def homework_performance(dataset: Dataset, truth: TruthSet) -> dict:
    """Per grader: mean true score of the submissions their group handed in."""
    perf: dict[str, list[float]] = {}
    for sub, members in dataset.groups.items():
        key = (dataset.submissions[sub], sub)
        if key not in truth.scores:
            continue
        for g in members:
            perf.setdefault(g, []).append(truth.scores[key])
    return {g: float(np.mean(v)) for g, v in sorted(perf.items())}


def correlation_report(dataset: Dataset, truth: TruthSet, roles=(GradeRole.PEER,)) -> dict:
    """Pearson correlations between homework performance, grading bias, mean
    deviation, and (when present) exam grades.

    Exam-based entries are omitted (not reported as zero) when the dataset has
    no exam grades, as are entries whose inputs are degenerate.  On real
    course data these links tend to be weak (magnitudes around 0.1 to 0.3);
    treat large values as a signal worth investigating, not as the norm.
    """
    bias = estimate_grader_bias(dataset, truth, None, roles)
    deviation = mean_deviation(dataset, truth, roles)
    homework = homework_performance(dataset, truth)

    report = {}

    def corr(name, xs: dict, ys: dict):
        shared = sorted(set(xs) & set(ys))
        try:
            report[name] = pearson_r([xs[g] for g in shared], [ys[g] for g in shared])
        except MetricError as err:
            warnings.warn(f"{name} not computable: {err}", stacklevel=3)

    graded = {g: bias.values[g] for g in bias.values if g not in bias.zero_support}
    corr("r_homework_bias", homework, graded)
    corr("r_homework_deviation", homework, deviation)
    if dataset.exam_grades:
        exams = dataset.exam_grades
        corr("r_exam_homework", exams, homework)
        corr("r_exam_bias", exams, graded)
        corr("r_exam_deviation", exams, deviation)
    return report


def _rescore_frozen(dataset: Dataset, roles, priors, bias, rel) -> dict:
    """Closed-form score update with every grader parameter frozen."""
    roles = as_roles(roles)
    num: dict[tuple[str, str], float] = {}
    den: dict[tuple[str, str], float] = {}
    for g in dataset.grades:
        if g.role not in roles or g.grader not in rel:
            continue
        key = (g.exercise, g.submission)
        r = rel[g.grader]
        num[key] = num.get(key, 0.0) + r * (g.value - bias.get(g.grader, 0.0))
        den[key] = den.get(key, 0.0) + r
    scores = {}
    for s, e in dataset.submissions.items():
        key = (e, s)
        mu, var = priors[e]
        scores[key] = (mu / var + num.get(key, 0.0)) / (1.0 / var + den.get(key, 0.0))
    return dict(sorted(scores.items()))


def exam_reliability_fit(
    dataset: Dataset,
    mode: str = "direct",
    hyper: Hyperparams = Hyperparams(),
    em: EmConfig = EmConfig(),
    roles=(GradeRole.PEER,),
) -> ModelFit:
    """Joint fit with reliabilities tied to exam grades.

    ``direct``: reliabilities are fixed (not EM-updated) at the exam grade
    rescaled linearly onto [0, 150] (floored at 1e-6; all-equal exam grades
    map to 150).  ``hybrid``: a standard joint fit, then each fitted
    reliability is multiplied by (exam grade / mean exam grade) and the scores
    are re-estimated once with reliabilities and biases frozen.
    """
    roles_set = as_roles(roles)
    graders = sorted({g.grader for g in dataset.grades if g.role in roles_set})
    missing = [g for g in graders if g not in dataset.exam_grades]
    if missing:
        raise EstimatorError(f"graders without exam grades: {missing[:5]}")

    if mode == "direct":
        exams = np.array([dataset.exam_grades[g] for g in graders])
        low, high = float(exams.min()), float(exams.max())
        if high == low:
            scaled = np.full(len(graders), 150.0)
        else:
            scaled = 150.0 * (exams - low) / (high - low)
        fixed = {g: max(1e-6, float(v)) for g, v in zip(graders, scaled)}
        fit = _fit_em(
            dataset, dataset.exercises, hyper, em, roles_set,
            fixed_reliability=fixed, model_name="exam-direct",
        )
        fit.meta["exam_mode"] = "direct"
        return fit

    if mode == "hybrid":
        fit = umt_fit(dataset, hyper, em, roles_set)
        mean_exam = float(np.mean([dataset.exam_grades[g] for g in graders]))
        if mean_exam <= 0:
            raise EstimatorError("mean exam grade must be positive for hybrid scaling")
        scaled_rel = {
            g: max(1e-6, fit.reliability[g] * dataset.exam_grades[g] / mean_exam)
            for g in fit.reliability
        }
        priors = {
            e: (p["mu"], p["var"]) for e, p in fit.meta["exercise_priors"].items()
        }
        scores = _rescore_frozen(dataset, roles_set, priors, fit.bias, scaled_rel)
        return ModelFit(
            model="exam-hybrid",
            scores=scores,
            bias=dict(fit.bias),
            reliability=dict(sorted(scaled_rel.items())),
            objective_trace=list(fit.objective_trace),
            iterations=fit.iterations,
            converged=fit.converged,
            meta={**fit.meta, "exam_mode": "hybrid"},
        )

    raise ValueError(f"unknown mode {mode!r} (expected 'direct' or 'hybrid')")
