"""Error functions and correlation statistics for evaluating estimators.

The rank error treats ties explicitly: a pair tied in exactly one of the two
score vectors costs 0.5, an inverted pair costs 1, anything else 0; the
result is the mean over all unordered pairs.  The cardinal error is the root
mean squared deviation, so values are comparable across exercises of
different sizes.
"""

from __future__ import annotations

import warnings
from typing import Callable, Mapping

import numpy as np

from peergrade._kernels import active as _kernel
from peergrade.data import TruthSet
from peergrade.errors import MetricError


def _aligned(estimated: Mapping, truth: Mapping):
    if set(estimated) != set(truth):
        missing = sorted(set(truth) - set(estimated))[:3]
        extra = sorted(set(estimated) - set(truth))[:3]
        raise MetricError(f"key sets differ (missing {missing}, extra {extra})")
    keys = sorted(estimated)
    x = np.array([float(estimated[k]) for k in keys], dtype=np.float64)
    y = np.array([float(truth[k]) for k in keys], dtype=np.float64)
    return x, y


def l2_error(estimated: Mapping, truth: Mapping) -> float:
    """Root-mean-square deviation between two score vectors with equal keys."""
    x, y = _aligned(estimated, truth)
    if x.size == 0:
        raise MetricError("empty score vectors")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def kendall_tau_error(estimated: Mapping, truth: Mapping) -> float:
    """Mean pairwise inversion penalty between the rankings the scores induce.

    Per unordered pair: 0 on agreement (including pairs tied on both sides),
    1 on inversion, 0.5 when exactly one side ties the pair.
    """
    x, y = _aligned(estimated, truth)
    n = x.size
    if n < 2:
        raise MetricError("kendall-tau error needs at least 2 entries")
    total = _kernel.kendall_error_sum(x, y)
    return float(total) / (n * (n - 1) / 2)


def pearson_r(xs, ys) -> float:
    """Product-moment correlation of two equal-length sequences."""
    x = np.asarray(list(xs), dtype=np.float64)
    y = np.asarray(list(ys), dtype=np.float64)
    if x.size != y.size:
        raise MetricError(f"length mismatch ({x.size} vs {y.size})")
    if x.size < 2:
        raise MetricError("correlation needs at least 2 points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise MetricError("correlation undefined for a zero-variance sequence")
    return float(np.corrcoef(x, y)[0, 1])


METRICS: dict[str, Callable] = {"l2": l2_error, "kendall": kendall_tau_error}


def per_exercise_errors(
    scores: Mapping[tuple[str, str], float],
    truth: TruthSet,
    metric="l2",
) -> dict[str, float]:
    """Apply a metric independently per exercise.

    ``scores`` maps (exercise, submission) to an estimate; every scored
    submission must have truth.  Exercises too small for the metric (a single
    submission under ``kendall``) are skipped with a warning.
    """
    fn = METRICS[metric] if isinstance(metric, str) else metric
    per: dict[str, dict[str, float]] = {}
    for (e, s), v in scores.items():
        per.setdefault(e, {})[s] = v

    out = {}
    for e in sorted(per):
        est = per[e]
        missing = [s for s in est if (e, s) not in truth.scores]
        if missing:
            raise MetricError(f"exercise {e!r}: no truth for submissions {sorted(missing)[:3]}")
        ref = {s: truth.scores[(e, s)] for s in est}
        try:
            out[e] = fn(est, ref)
        except MetricError as err:
            warnings.warn(f"exercise {e!r} skipped: {err}", stacklevel=2)
    return out
