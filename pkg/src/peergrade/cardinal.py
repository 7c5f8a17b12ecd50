"""Cardinal grade estimators.

Baselines (mean, median) and MAP-fitted Gaussian models in which each grader
has an additive bias and a precision ("reliability"), and each submission a
latent true score:

    grade ~ Normal(score + bias, 1 / reliability)
    score ~ Normal(mu_score, var_score)       [per exercise]
    bias ~ Normal(0, var_bias)
    reliability ~ Gamma(alpha, rate=beta)

``ust_fit`` fits one exercise in isolation; ``umt_fit`` shares each grader's
bias and reliability across all exercises.  Fitting is coordinate ascent on
the joint log posterior with closed-form updates, so the objective trace is
non-decreasing and the result is deterministic.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field

import numpy as np

from peergrade._kernels import active as _kernel
from peergrade.data import Dataset, GradeRole, as_roles
from peergrade.errors import DegenerateExerciseError, EstimatorError

ANCHOR_GRADER = "__anchor__"  # reserved pseudo-grader id for truth anchoring


@dataclass(frozen=True)
class Hyperparams:
    """Prior parameters; ``None`` for the score prior means "use the
    per-exercise sample mean/variance of the selected grades"."""

    mu_score: float | None = None
    var_score: float | None = None
    var_bias: float = 1.0 / 36.0
    alpha: float = 3.0
    beta: float = 1.0 / 30.0

    def __post_init__(self):
        if self.var_score is not None and self.var_score <= 0:
            raise ValueError("var_score must be positive")
        if self.var_bias <= 0 or self.alpha <= 0 or self.beta <= 0:
            raise ValueError("var_bias, alpha and beta must be positive")


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-6
    max_iter: int = 500
    rel_floor: float = 1e-6


@dataclass
class ModelFit:
    """Fitted scores plus per-grader bias/reliability and the objective trace."""

    model: str
    scores: dict[tuple[str, str], float]
    bias: dict[str, float]
    reliability: dict[str, float]
    objective_trace: list[float]
    iterations: int
    converged: bool
    meta: dict = field(default_factory=dict)


def _grades_by_submission(dataset: Dataset, roles, exercises=None):
    roles = as_roles(roles)
    per: dict[str, list] = {}
    for g in dataset.grades:
        if g.role in roles and (exercises is None or g.exercise in exercises):
            per.setdefault(g.submission, []).append(g.value)
    return per


def _baseline(dataset: Dataset, roles, reducer, name) -> ModelFit:
    per = _grades_by_submission(dataset, roles)
    missing = sorted(s for s in dataset.submissions if s not in per)
    if missing:
        raise EstimatorError(
            f"{name}: submissions without grades of roles "
            f"{sorted(r.value for r in as_roles(roles))}: {missing[:5]}"
        )
    scores = {
        (dataset.submissions[s], s): float(reducer(vs)) for s, vs in per.items()
    }
    return ModelFit(
        model=name,
        scores=dict(sorted(scores.items())),
        bias={},
        reliability={},
        objective_trace=[],
        iterations=0,
        converged=True,
        meta={"roles": sorted(r.value for r in as_roles(roles))},
    )


def mean_estimate(dataset: Dataset, roles=(GradeRole.PEER,)) -> ModelFit:
    """Per-submission arithmetic mean of the selected grades."""
    return _baseline(dataset, roles, statistics.fmean, "mean")


def median_estimate(dataset: Dataset, roles=(GradeRole.PEER,)) -> ModelFit:
    """Per-submission sample median (mean of the two central values when even)."""
    return _baseline(dataset, roles, statistics.median, "median")


def _fit_em(
    dataset: Dataset,
    exercises,
    hyper: Hyperparams,
    em: EmConfig,
    roles,
    anchors=None,
    anchor_reliability: float = 1000.0,
    fixed_reliability=None,
    model_name: str = "umt",
) -> ModelFit:
    """Shared MAP coordinate-ascent fit over the given exercises.

    ``anchors`` maps (exercise, submission) to a trusted value injected as an
    extra observation by a frozen pseudo-grader with the given reliability.
    ``fixed_reliability`` freezes real graders' reliabilities (not updated).
    """
    roles = as_roles(roles)
    exercises = sorted(exercises)
    obs = [
        g
        for g in dataset.grades
        if g.role in roles and g.exercise in set(exercises)
    ]
    if not obs:
        raise EstimatorError(
            f"{model_name}: no grades with roles "
            f"{sorted(r.value for r in roles)} in exercises {exercises[:5]}"
        )

    subs = sorted(s for s, e in dataset.submissions.items() if e in set(exercises))
    sub_index = {s: i for i, s in enumerate(subs)}
    grader_list = sorted({g.grader for g in obs})
    if anchors and ANCHOR_GRADER in grader_list:
        raise EstimatorError(f"grader id {ANCHOR_GRADER!r} is reserved for anchoring")

    # per-exercise score priors (sample statistics of the real grades by default)
    prior = {}
    for e in exercises:
        vals = [g.value for g in obs if g.exercise == e]
        mu = hyper.mu_score
        var = hyper.var_score
        if mu is None:
            mu = float(np.mean(vals)) if vals else 0.0
        if var is None:
            if len(vals) < 2:
                raise DegenerateExerciseError(
                    f"exercise {e!r} has {len(vals)} usable grades; pass an explicit var_score"
                )
            var = float(np.var(vals, ddof=1))
            if var == 0.0:
                raise DegenerateExerciseError(
                    f"exercise {e!r} has zero grade variance; pass an explicit var_score"
                )
        prior[e] = (mu, var)

    values = [g.value for g in obs]
    sub_idx = [sub_index[g.submission] for g in obs]
    grader_index = {g: i for i, g in enumerate(grader_list)}
    grader_idx = [grader_index[g.grader] for g in obs]

    n_graders = len(grader_list)
    fixed_reliability = dict(fixed_reliability or {})
    update_bias = np.ones(n_graders, dtype=np.uint8)
    update_rel = np.ones(n_graders, dtype=np.uint8)
    rel0 = np.full(n_graders, hyper.alpha / hyper.beta, dtype=np.float64)
    for g, value in fixed_reliability.items():
        if g not in grader_index:
            continue
        i = grader_index[g]
        update_rel[i] = 0
        rel0[i] = max(em.rel_floor, float(value))

    if anchors:
        grader_list.append(ANCHOR_GRADER)
        grader_index[ANCHOR_GRADER] = n_graders
        update_bias = np.append(update_bias, np.uint8(0))
        update_rel = np.append(update_rel, np.uint8(0))
        rel0 = np.append(rel0, float(anchor_reliability))
        n_graders += 1
        for (e, s), value in sorted(anchors.items()):
            if s not in sub_index or dataset.submissions.get(s) != e:
                raise EstimatorError(f"anchor ({e}, {s}) is not a submission of these exercises")
            values.append(float(value))
            sub_idx.append(sub_index[s])
            grader_idx.append(grader_index[ANCHOR_GRADER])

    values = np.asarray(values, dtype=np.float64)
    sub_idx = np.asarray(sub_idx, dtype=np.int64)
    grader_idx = np.asarray(grader_idx, dtype=np.int64)
    n_per_grader = np.bincount(grader_idx, minlength=n_graders).astype(np.int64)

    prior_mu = np.array([prior[dataset.submissions[s]][0] for s in subs], dtype=np.float64)
    prior_prec = np.array(
        [1.0 / prior[dataset.submissions[s]][1] for s in subs], dtype=np.float64
    )

    # deterministic init: per-submission grade mean, zero bias, prior-mean reliability
    scores = prior_mu.copy()
    count = np.bincount(sub_idx, minlength=len(subs))
    sums = np.bincount(sub_idx, weights=values, minlength=len(subs))
    graded = count > 0
    scores[graded] = sums[graded] / count[graded]
    bias = np.zeros(n_graders, dtype=np.float64)
    rel = rel0

    bias_prec = 1.0 / hyper.var_bias
    trace = [
        _kernel.em_objective(
            values, sub_idx, grader_idx, scores, bias, rel,
            prior_mu, prior_prec, bias_prec, hyper.alpha, hyper.beta,
            update_bias, update_rel,
        )
    ]
    converged = False
    iterations = 0
    for _ in range(em.max_iter):
        objective, delta = _kernel.em_sweep(
            values, sub_idx, grader_idx, scores, bias, rel,
            prior_mu, prior_prec, bias_prec, hyper.alpha, hyper.beta,
            n_per_grader, update_bias, update_rel, em.rel_floor,
        )
        trace.append(objective)
        iterations += 1
        if delta < em.tol:
            converged = True
            break
    # finalize: one score-only update so the reported scores are exactly the
    # posterior-mean response to the reported biases/reliabilities (still ascent)
    frozen = np.zeros(n_graders, dtype=np.uint8)
    _kernel.em_sweep(
        values, sub_idx, grader_idx, scores, bias, rel,
        prior_mu, prior_prec, bias_prec, hyper.alpha, hyper.beta,
        n_per_grader, frozen, frozen, em.rel_floor,
    )
    trace.append(
        _kernel.em_objective(
            values, sub_idx, grader_idx, scores, bias, rel,
            prior_mu, prior_prec, bias_prec, hyper.alpha, hyper.beta,
            update_bias, update_rel,
        )
    )

    score_map = {
        (dataset.submissions[s], s): float(scores[i]) for s, i in sub_index.items()
    }
    bias_map = {}
    rel_map = {}
    for g, i in grader_index.items():
        if g == ANCHOR_GRADER:
            continue
        bias_map[g] = float(bias[i])
        rel_map[g] = float(rel[i])
    return ModelFit(
        model=model_name,
        scores=dict(sorted(score_map.items())),
        bias=dict(sorted(bias_map.items())),
        reliability=dict(sorted(rel_map.items())),
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        meta={
            "roles": sorted(r.value for r in roles),
            "hyper": {
                "mu_score": hyper.mu_score,
                "var_score": hyper.var_score,
                "var_bias": hyper.var_bias,
                "alpha": hyper.alpha,
                "beta": hyper.beta,
            },
            "exercise_priors": {e: {"mu": mu, "var": var} for e, (mu, var) in prior.items()},
        },
    )


def ust_fit(
    dataset: Dataset,
    exercise: str,
    hyper: Hyperparams = Hyperparams(),
    em: EmConfig = EmConfig(),
    roles=(GradeRole.PEER,),
) -> ModelFit:
    """Fit the Gaussian bias/reliability model on a single exercise."""
    if exercise not in dataset.exercises:
        raise EstimatorError(f"unknown exercise {exercise!r}")
    return _fit_em(dataset, [exercise], hyper, em, roles, model_name="ust")


def umt_fit(
    dataset: Dataset,
    hyper: Hyperparams = Hyperparams(),
    em: EmConfig = EmConfig(),
    roles=(GradeRole.PEER,),
) -> ModelFit:
    """Fit jointly over all exercises, sharing grader bias/reliability."""
    return _fit_em(dataset, dataset.exercises, hyper, em, roles, model_name="umt")


# ---------------------------------------------------------------------------
# fit.json serialization (shared by cardinal, ordinal and supervised fits)

def fit_to_dict(fit: ModelFit) -> dict:
    graders = sorted(set(fit.bias) | set(fit.reliability))
    return {
        "model": fit.model,
        "scores": [
            {"exercise": e, "submission": s, "score": v}
            for (e, s), v in sorted(fit.scores.items())
        ],
        "graders": [
            {
                "grader": g,
                "bias": fit.bias.get(g),
                "reliability": fit.reliability.get(g),
            }
            for g in graders
        ],
        "objective_trace": list(fit.objective_trace),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "config": fit.meta,
    }


def save_fit(fit: ModelFit, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(fit_to_dict(fit), fh, indent=2)
        fh.write("\n")


def load_fit(path: str) -> ModelFit:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return ModelFit(
        model=doc.get("model", "unknown"),
        scores={(r["exercise"], r["submission"]): float(r["score"]) for r in doc["scores"]},
        bias={
            r["grader"]: float(r["bias"]) for r in doc.get("graders", []) if r.get("bias") is not None
        },
        reliability={
            r["grader"]: float(r["reliability"])
            for r in doc.get("graders", [])
            if r.get("reliability") is not None
        },
        objective_trace=[float(v) for v in doc.get("objective_trace", [])],
        iterations=int(doc.get("iterations", 0)),
        converged=bool(doc.get("converged", False)),
        meta=doc.get("config", {}),
    )
