"""Pure-Python/numpy backend for the numeric kernels.

Mirrors the call signatures of the compiled extension module exactly.  The
coordinate-ascent sweep and the rank-error counter are vectorized with numpy;
the stochastic-gradient epochs are inherently sequential (each step reads the
values written by the previous one), so here they are plain Python loops and
substantially slower than the compiled versions.  See
``benchmarks/bench_backends.py`` for the measured gap.

Conventions shared by both backends:

* pairwise/listwise score epochs apply, per touch, the likelihood gradient
  step followed by an exact exponential shrink toward the prior mean
  (``prior_shrink`` is ``exp(-step * prec / touches)`` per item, so one epoch
  amounts to one full prior flow step and never overshoots);
* reliability epochs step in log space with the Gamma-prior gradient scaled
  by ``rel_scaled`` (1 / touches per grader) and clamp to ``[1e-6, 1e6]``.
"""

import math

import numpy as np

BACKEND = "python"

_REL_MIN = 1e-6
_REL_MAX = 1e6
_LOG_SQRT_2PI = 0.9189385332046727
_INV_SQRT_2PI = 0.3989422804014327
_SQRT2 = math.sqrt(2.0)


def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _log_sigmoid(z):
    if z < -35.0:
        return z
    return -math.log1p(math.exp(-z))


def _probit_hazard(z):
    # phi(z) / Phi(z), with the asymptotic tail expansion for z << 0 where
    # the direct ratio would divide two underflowing quantities.
    if z < -8.0:
        t = -z
        return t / (1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t))
    phi = math.exp(-0.5 * z * z) * _INV_SQRT_2PI
    cdf = 0.5 * math.erfc(-z / _SQRT2)
    return phi / cdf


def _log_norm_cdf(z):
    if z < -8.0:
        t = -z
        tail = 1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t)
        return -0.5 * z * z - math.log(t) - _LOG_SQRT_2PI + math.log(tail)
    return math.log(0.5 * math.erfc(-z / _SQRT2))


# ---------------------------------------------------------------------------
# coordinate-ascent sweep for the Gaussian bias/reliability models

def em_sweep(
    values,
    sub_idx,
    grader_idx,
    scores,
    bias,
    rel,
    prior_mu,
    prior_prec,
    bias_prec,
    alpha,
    beta,
    n_per_grader,
    update_bias,
    update_rel,
    rel_floor,
):
    """One coordinate-ascent sweep (scores, biases, reliabilities) in place.

    Returns ``(objective, max_delta)`` where the objective is the joint log
    posterior after the sweep (up to additive constants) and ``max_delta`` is
    the largest absolute parameter change.
    """
    n_subs = scores.shape[0]
    n_graders = bias.shape[0]

    w = rel[grader_idx]
    num = np.bincount(sub_idx, weights=w * (values - bias[grader_idx]), minlength=n_subs)
    den = np.bincount(sub_idx, weights=w, minlength=n_subs)
    new_scores = (prior_mu * prior_prec + num) / (prior_prec + den)
    max_delta = float(np.max(np.abs(new_scores - scores))) if n_subs else 0.0
    scores[:] = new_scores

    resid = values - scores[sub_idx]
    drift = np.bincount(grader_idx, weights=resid, minlength=n_graders)
    upd_b = update_bias.astype(bool)
    new_bias = np.where(upd_b, rel * drift / (bias_prec + n_per_grader * rel), bias)
    max_delta = max(max_delta, float(np.max(np.abs(new_bias - bias))))
    bias[:] = new_bias

    resid = values - scores[sub_idx] - bias[grader_idx]
    sq = np.bincount(grader_idx, weights=resid * resid, minlength=n_graders)
    upd_r = update_rel.astype(bool)
    new_rel = np.where(
        upd_r,
        np.maximum(rel_floor, (alpha - 1.0 + 0.5 * n_per_grader) / (beta + 0.5 * sq)),
        rel,
    )
    max_delta = max(max_delta, float(np.max(np.abs(new_rel - rel))))
    rel[:] = new_rel

    robs = rel[grader_idx]
    objective = float(
        0.5 * np.sum(np.log(robs))
        - 0.5 * np.sum(robs * resid * resid)
        - 0.5 * np.sum(prior_prec * (scores - prior_mu) ** 2)
        - 0.5 * bias_prec * np.sum(np.where(upd_b, bias * bias, 0.0))
        + np.sum(np.where(upd_r, (alpha - 1.0) * np.log(rel) - beta * rel, 0.0))
    )
    return objective, max_delta


def em_objective(
    values,
    sub_idx,
    grader_idx,
    scores,
    bias,
    rel,
    prior_mu,
    prior_prec,
    bias_prec,
    alpha,
    beta,
    update_bias,
    update_rel,
):
    """Joint log posterior at the current parameters (no updates)."""
    resid = values - scores[sub_idx] - bias[grader_idx]
    robs = rel[grader_idx]
    upd_b = update_bias.astype(bool)
    upd_r = update_rel.astype(bool)
    return float(
        0.5 * np.sum(np.log(robs))
        - 0.5 * np.sum(robs * resid * resid)
        - 0.5 * np.sum(prior_prec * (scores - prior_mu) ** 2)
        - 0.5 * bias_prec * np.sum(np.where(upd_b, bias * bias, 0.0))
        + np.sum(np.where(upd_r, (alpha - 1.0) * np.log(rel) - beta * rel, 0.0))
    )


# ---------------------------------------------------------------------------
# SGD over pairwise comparisons (logistic or probit link)

def pair_epoch_scores(
    winners, losers, graders, order, latent, rel, prior_mu, prior_shrink, step, probit
):
    """One SGD epoch over pairwise comparisons, updating latent scores."""
    for t in range(order.shape[0]):
        p = order[t]
        w = winners[p]
        l = losers[p]
        r = rel[graders[p]]
        z = r * (latent[w] - latent[l])
        if probit:
            g = r * _probit_hazard(z)
        else:
            g = r * _sigmoid(-z)
        latent[w] = prior_mu + (latent[w] + step * g - prior_mu) * prior_shrink[w]
        latent[l] = prior_mu + (latent[l] - step * g - prior_mu) * prior_shrink[l]


def pair_epoch_rel(
    winners, losers, graders, order, latent, rel, alpha, beta, rel_scaled, step, probit
):
    """One SGD epoch over pairwise comparisons, updating grader reliabilities."""
    for t in range(order.shape[0]):
        p = order[t]
        g = graders[p]
        r = rel[g]
        z = r * (latent[winners[p]] - latent[losers[p]])
        if probit:
            grad = _probit_hazard(z) * z
        else:
            grad = _sigmoid(-z) * z
        grad += rel_scaled[g] * ((alpha - 1.0) - beta * r)
        r = r * math.exp(step * grad)
        if r < _REL_MIN:
            r = _REL_MIN
        elif r > _REL_MAX:
            r = _REL_MAX
        rel[g] = r


def pair_objective(winners, losers, graders, latent, rel, probit):
    """Pairwise log likelihood at the current latent scores."""
    total = 0.0
    for p in range(winners.shape[0]):
        z = rel[graders[p]] * (latent[winners[p]] - latent[losers[p]])
        total += _log_norm_cdf(z) if probit else _log_sigmoid(z)
    return total


# ---------------------------------------------------------------------------
# SGD over full ballots (sequential-choice ranking model)

def _stage_probs(z):
    zmax = max(z)
    expz = [math.exp(v - zmax) for v in z]
    s = sum(expz)
    return [v / s for v in expz], zmax + math.log(s)


def listwise_epoch_scores(
    items, starts, lens, ballot_graders, order, latent, rel, prior_mu, prior_shrink, step
):
    """One SGD epoch over ballots; one batched gradient step per ballot."""
    for t in range(order.shape[0]):
        b = order[t]
        m = lens[b]
        off = starts[b]
        r = rel[ballot_graders[b]]
        z = [r * latent[items[off + i]] for i in range(m)]
        grad = [0.0] * m
        for stage in range(m - 1):
            probs, _ = _stage_probs(z[stage:])
            grad[stage] += r * (1.0 - probs[0])
            for j in range(1, len(probs)):
                grad[stage + j] -= r * probs[j]
        for i in range(m):
            it = items[off + i]
            latent[it] = prior_mu + (latent[it] + step * grad[i] - prior_mu) * prior_shrink[it]


def listwise_epoch_rel(
    items, starts, lens, ballot_graders, order, latent, rel, alpha, beta, rel_scaled, step
):
    """One SGD epoch over ballots, updating reliabilities (log-space step)."""
    for t in range(order.shape[0]):
        b = order[t]
        m = lens[b]
        off = starts[b]
        g = ballot_graders[b]
        r = rel[g]
        z = [r * latent[items[off + i]] for i in range(m)]
        grad = 0.0
        for stage in range(m - 1):
            probs, _ = _stage_probs(z[stage:])
            mean_z = sum(p * v for p, v in zip(probs, z[stage:]))
            grad += z[stage] - mean_z
        grad += rel_scaled[g] * ((alpha - 1.0) - beta * r)
        r = r * math.exp(step * grad)
        if r < _REL_MIN:
            r = _REL_MIN
        elif r > _REL_MAX:
            r = _REL_MAX
        rel[g] = r


def listwise_objective(items, starts, lens, ballot_graders, latent, rel):
    """Log likelihood of all ballots under the sequential-choice model."""
    total = 0.0
    for b in range(lens.shape[0]):
        m = lens[b]
        off = starts[b]
        r = rel[ballot_graders[b]]
        z = [r * latent[items[off + i]] for i in range(m)]
        for stage in range(m - 1):
            _, lse = _stage_probs(z[stage:])
            total += z[stage] - lse
    return total


# ---------------------------------------------------------------------------
# rank error counting

def kendall_error_sum(x, y):
    """Sum of the per-pair inversion penalties (0 agree, 1 invert, 0.5 one-sided tie)."""
    n = x.shape[0]
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, 1)
    a = dx[iu]
    b = dy[iu]
    both_tied = (a == 0) & (b == 0)
    one_tied = (a == 0) ^ (b == 0)
    inverted = ~both_tied & ~one_tied & (a != b)
    return float(0.5 * np.count_nonzero(one_tied) + 1.0 * np.count_nonzero(inverted))
