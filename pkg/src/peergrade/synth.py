"""Synthetic grading-data generators and seed derivation.

Datasets are generated from a grader population with per-grader additive bias
and precision (inverse variance), a per-submission true-score distribution,
and a balanced random assignment of peer graders.  Everything is driven by a
fixed-algorithm RNG (PCG64), so a (config, seed) pair reproduces bit-identical
data on any platform.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from peergrade.data import CardinalGrade, Dataset, GradeRole, TruthSet, make_dataset
from peergrade.errors import InfeasibleAssignmentError

_MASK64 = (1 << 64) - 1


def replicate_seed(base_seed: int, replicate_index: int) -> int:
    """Derive an independent per-replicate seed.

    Formula: ``base_seed XOR splitmix64_finalizer(replicate_index)``.  The
    finalizer is a bijection on 64-bit integers, so for a fixed base seed the
    map is injective over replicate indices, and replicates can be computed in
    any order.
    """
    z = (replicate_index + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return (base_seed ^ z) & _MASK64


@dataclass(frozen=True)
class NormalTruth:
    """True scores drawn from a Gaussian."""

    mean: float = 0.5
    sd: float = 1.0 / 6.0


@dataclass(frozen=True)
class WeibullTruth:
    """Right-skewed true scores drawn from a Weibull distribution."""

    shape: float = 1.5
    scale: float = 1.0 / 3.0

    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)


TruthModel = Union[NormalTruth, WeibullTruth]


@dataclass(frozen=True)
class GeneratorConfig:
    n_submissions: int = 100
    n_graders: int = 100
    n_exercises: int = 5
    grades_per_submission: int = 6
    seed: int = 0
    truth_model: TruthModel = field(default_factory=NormalTruth)
    bias_sd: float = 1.0 / 8.0
    reliability_shape: float = 3.0
    reliability_rate: float = 1.0 / 30.0
    n_random_graders: int = 0
    clip_to_unit: bool = True
    redraw_per_exercise: bool = False


@dataclass
class SynthResult:
    """Generated dataset plus the planted grader parameters (for oracles)."""

    dataset: Dataset
    truth: TruthSet
    grader_ids: tuple[str, ...]
    bias: np.ndarray          # shape (n_exercises, n_graders)
    reliability: np.ndarray   # shape (n_exercises, n_graders)
    random_graders: frozenset[str]


def config_to_dict(config: GeneratorConfig) -> dict:
    doc = asdict(config)
    kind = "normal" if isinstance(config.truth_model, NormalTruth) else "weibull"
    doc["truth_model"] = {"kind": kind, **asdict(config.truth_model)}
    return doc


def config_from_dict(doc: dict) -> GeneratorConfig:
    doc = dict(doc)
    tm = dict(doc.pop("truth_model", {"kind": "normal"}))
    kind = tm.pop("kind", "normal")
    model = NormalTruth(**tm) if kind == "normal" else WeibullTruth(**tm)
    return GeneratorConfig(truth_model=model, **doc)


def _validate(config: GeneratorConfig):
    if config.n_submissions < 1 or config.n_graders < 1 or config.n_exercises < 1:
        raise ValueError("submission, grader and exercise counts must be positive")
    if config.grades_per_submission < 1:
        raise ValueError("grades_per_submission must be >= 1")
    if config.n_random_graders > config.n_graders:
        raise ValueError("n_random_graders exceeds n_graders")
    if config.grades_per_submission > config.n_graders - 1:
        raise InfeasibleAssignmentError(
            f"cannot assign {config.grades_per_submission} distinct non-member graders "
            f"per submission with only {config.n_graders} graders"
        )


def _balanced_assignment(rng, n_subs, n_graders, k, owner):
    """k distinct graders per submission, never the owner, balanced loads.

    Builds a shuffled slot pool with per-grader quotas (floor/ceil of the mean
    load), deals greedily, and repairs endgame conflicts by swapping with
    earlier submissions.  Loads stay exactly at quota.
    """
    total = k * n_subs
    base, rem = divmod(total, n_graders)
    quota = np.full(n_graders, base, dtype=np.int64)
    if rem:
        quota[rng.permutation(n_graders)[:rem]] += 1

    owned = np.zeros(n_graders, dtype=np.int64)
    for g in owner:
        owned[g] += 1
    capacity = n_subs - owned
    if int(capacity.sum()) < total:
        raise InfeasibleAssignmentError(
            f"total capacity {int(capacity.sum())} below required {total} grades"
        )
    # shift quota away from graders who own too many submissions to take it
    while True:
        over = np.nonzero(quota > capacity)[0]
        if over.size == 0:
            break
        donor = over[0]
        room = np.nonzero(quota < capacity)[0]
        quota[donor] -= 1
        quota[room[0]] += 1

    pool = np.repeat(np.arange(n_graders), quota)
    rng.shuffle(pool)
    pool = [int(g) for g in pool]
    assigned: list[list[int]] = [[] for _ in range(n_subs)]
    order = [int(s) for s in rng.permutation(n_subs)]
    for s in order:
        taken = assigned[s]
        rejected = []
        while len(taken) < k and pool:
            g = pool.pop()
            if g == owner[s] or g in taken:
                rejected.append(g)
            else:
                taken.append(g)
        pool.extend(reversed(rejected))
        while len(taken) < k:
            if not _swap_repair(s, taken, pool, assigned, order, owner):
                raise InfeasibleAssignmentError(
                    f"could not place {k} graders on submission {s}"
                )
    return assigned


def _swap_repair(s, taken, pool, assigned, order, owner):
    # every leftover pool grader is incompatible with s; trade one of them to
    # an earlier submission t in exchange for a grader compatible with s
    for t in order:
        if t == s or not assigned[t]:
            continue
        for i, g in enumerate(pool):
            if g == owner[t] or g in assigned[t]:
                continue
            for gp in assigned[t]:
                if gp == owner[s] or gp in taken:
                    continue
                assigned[t].remove(gp)
                assigned[t].append(g)
                pool.pop(i)
                taken.append(gp)
                return True
    return False


def _draw_truth(rng, model: TruthModel, size: int) -> np.ndarray:
    if isinstance(model, NormalTruth):
        return rng.normal(model.mean, model.sd, size)
    return model.scale * rng.weibull(model.shape, size)


def generate_full(config: GeneratorConfig) -> SynthResult:
    """Generate a dataset, its truth, and the planted grader parameters."""
    _validate(config)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n_sub, n_g, n_ex = config.n_submissions, config.n_graders, config.n_exercises
    k = config.grades_per_submission

    pad_g = len(str(n_g - 1))
    pad_s = len(str(n_sub - 1))
    pad_e = len(str(n_ex - 1))
    grader_ids = tuple(f"g{i:0{pad_g}d}" for i in range(n_g))

    if config.redraw_per_exercise:
        bias = rng.normal(0.0, config.bias_sd, (n_ex, n_g))
        rel = rng.gamma(config.reliability_shape, 1.0 / config.reliability_rate, (n_ex, n_g))
    else:
        bias = np.tile(rng.normal(0.0, config.bias_sd, n_g), (n_ex, 1))
        rel = np.tile(
            rng.gamma(config.reliability_shape, 1.0 / config.reliability_rate, n_g),
            (n_ex, 1),
        )
    random_idx = np.sort(rng.choice(n_g, size=config.n_random_graders, replace=False))
    is_random = np.zeros(n_g, dtype=bool)
    is_random[random_idx] = True

    owner = [s % n_g for s in range(n_sub)]
    exercises = {}
    submissions = {}
    groups = {}
    grades = []
    truth_scores = {}
    for ei in range(n_ex):
        exercise = f"e{ei:0{pad_e}d}"
        exercises[exercise] = 1.0
        truth = _draw_truth(rng, config.truth_model, n_sub)
        if config.clip_to_unit:
            truth = np.clip(truth, 0.0, 1.0)
        assignment = _balanced_assignment(rng, n_sub, n_g, k, owner)

        pairs = [(s, g) for s in range(n_sub) for g in assignment[s]]
        eps = rng.standard_normal(len(pairs))
        uniform = rng.uniform(0.0, 1.0, len(pairs))
        sub_ids = []
        for si in range(n_sub):
            sub = f"{exercise}_s{si:0{pad_s}d}"
            sub_ids.append(sub)
            submissions[sub] = exercise
            groups[sub] = frozenset({grader_ids[owner[si]]})
            truth_scores[(exercise, sub)] = float(truth[si])
        for idx, (si, gi) in enumerate(pairs):
            if is_random[gi]:
                value = uniform[idx]
            else:
                value = truth[si] + bias[ei, gi] + eps[idx] / math.sqrt(rel[ei, gi])
                if config.clip_to_unit:
                    value = min(1.0, max(0.0, value))
            grades.append(
                CardinalGrade(exercise, sub_ids[si], grader_ids[gi], GradeRole.PEER, float(value))
            )

    dataset = make_dataset(exercises, submissions, groups, grades)
    truth_set = TruthSet(dict(sorted(truth_scores.items())), provenance="synthetic")
    return SynthResult(
        dataset=dataset,
        truth=truth_set,
        grader_ids=grader_ids,
        bias=bias,
        reliability=rel,
        random_graders=frozenset(grader_ids[i] for i in random_idx),
    )


def generate(config: GeneratorConfig) -> tuple[Dataset, TruthSet]:
    """Generate a synthetic dataset and its ground truth."""
    result = generate_full(config)
    return result.dataset, result.truth


def perturb_truth(truth: TruthSet, noise_sd: float, seed: int = 0) -> TruthSet:
    """Add independent Gaussian noise to every true score.

    ``noise_sd = 0`` returns an identical copy; results are deterministic
    given the seed (keys are processed in sorted order).
    """
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    keys = sorted(truth.scores)
    if noise_sd == 0:
        return TruthSet({k: truth.scores[k] for k in keys}, provenance=truth.provenance)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.normal(0.0, noise_sd, len(keys))
    return TruthSet(
        {k: float(truth.scores[k] + noise[i]) for i, k in enumerate(keys)},
        provenance=truth.provenance,
    )


# presets for the synthetic experiment protocols
def protocol_config(name: str, k: int, seed: int) -> GeneratorConfig:
    """GeneratorConfig presets for the benchmark protocols.

    The cardinal protocols run unclipped so the data follows the generative
    model exactly; the skewed variants add 20 graders reporting uniform noise.
    """
    if name in ("fig1_left", "noisy_truth"):
        return GeneratorConfig(
            n_submissions=100, n_graders=100, n_exercises=5,
            grades_per_submission=k, seed=seed, clip_to_unit=False,
        )
    if name == "fig1_right":
        return GeneratorConfig(
            n_submissions=100, n_graders=100, n_exercises=5,
            grades_per_submission=k, seed=seed, truth_model=WeibullTruth(),
            n_random_graders=20, clip_to_unit=False,
        )
    if name == "fig2_left":
        return GeneratorConfig(
            n_submissions=100, n_graders=100, n_exercises=1,
            grades_per_submission=k, seed=seed, clip_to_unit=False,
        )
    if name == "fig2_right":
        return GeneratorConfig(
            n_submissions=100, n_graders=100, n_exercises=1,
            grades_per_submission=k, seed=seed, truth_model=WeibullTruth(),
            n_random_graders=20, clip_to_unit=False,
        )
    raise ValueError(f"unknown protocol {name!r}")


def apply_overrides(config: GeneratorConfig, overrides: dict) -> GeneratorConfig:
    """Apply a plain-dict override set (as parsed from CLI/config files)."""
    if not overrides:
        return config
    doc = config_to_dict(config)
    for key, value in overrides.items():
        if key == "truth_model":
            doc["truth_model"] = value
        elif key not in doc:
            raise ValueError(f"unknown generator field {key!r}")
        else:
            doc[key] = value
    return config_from_dict(doc)
