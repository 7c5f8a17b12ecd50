# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: coordinate-ascent sweeps, SGD epochs, rank-error counting.

Signature-compatible with ``peergrade._kernels._pure`` (see that module for
the shared conventions); the package selects between the two at import time.
"""

from libc.math cimport exp, log, log1p, erfc, fabs
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t, uint8_t

BACKEND = "cython"

cdef double _REL_MIN = 1e-6
cdef double _REL_MAX = 1e6
cdef double _LOG_SQRT_2PI = 0.9189385332046727
cdef double _INV_SQRT_2PI = 0.3989422804014327
cdef double _SQRT2 = 1.4142135623730951


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _log_sigmoid(double z) noexcept nogil:
    if z < -35.0:
        return z
    return -log1p(exp(-z))


cdef inline double _probit_hazard(double z) noexcept nogil:
    cdef double t, phi, cdf
    if z < -8.0:
        t = -z
        return t / (1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t))
    phi = exp(-0.5 * z * z) * _INV_SQRT_2PI
    cdf = 0.5 * erfc(-z / _SQRT2)
    return phi / cdf


cdef inline double _log_norm_cdf(double z) noexcept nogil:
    cdef double t, tail
    if z < -8.0:
        t = -z
        tail = 1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t)
        return -0.5 * z * z - log(t) - _LOG_SQRT_2PI + log(tail)
    return log(0.5 * erfc(-z / _SQRT2))


def em_sweep(
    const double[::1] values,
    const int64_t[::1] sub_idx,
    const int64_t[::1] grader_idx,
    double[::1] scores,
    double[::1] bias,
    double[::1] rel,
    const double[::1] prior_mu,
    const double[::1] prior_prec,
    double bias_prec,
    double alpha,
    double beta,
    const int64_t[::1] n_per_grader,
    const uint8_t[::1] update_bias,
    const uint8_t[::1] update_rel,
    double rel_floor,
):
    """One coordinate-ascent sweep (scores, biases, reliabilities) in place.

    Returns ``(objective, max_delta)``.
    """
    cdef Py_ssize_t n_obs = values.shape[0]
    cdef Py_ssize_t n_subs = scores.shape[0]
    cdef Py_ssize_t n_graders = bias.shape[0]
    cdef Py_ssize_t i, g
    cdef double r, new_val, d, resid, objective, max_delta
    cdef double *num = <double *> malloc(n_subs * sizeof(double))
    cdef double *den = <double *> malloc(n_subs * sizeof(double))
    cdef double *acc = <double *> malloc(n_graders * sizeof(double))
    if num == NULL or den == NULL or acc == NULL:
        free(num); free(den); free(acc)
        raise MemoryError()

    max_delta = 0.0
    try:
        for i in range(n_subs):
            num[i] = 0.0
            den[i] = 0.0
        for i in range(n_obs):
            g = grader_idx[i]
            r = rel[g]
            num[sub_idx[i]] += r * (values[i] - bias[g])
            den[sub_idx[i]] += r
        for i in range(n_subs):
            new_val = (prior_mu[i] * prior_prec[i] + num[i]) / (prior_prec[i] + den[i])
            d = fabs(new_val - scores[i])
            if d > max_delta:
                max_delta = d
            scores[i] = new_val

        for i in range(n_graders):
            acc[i] = 0.0
        for i in range(n_obs):
            acc[grader_idx[i]] += values[i] - scores[sub_idx[i]]
        for i in range(n_graders):
            if update_bias[i]:
                new_val = rel[i] * acc[i] / (bias_prec + n_per_grader[i] * rel[i])
                d = fabs(new_val - bias[i])
                if d > max_delta:
                    max_delta = d
                bias[i] = new_val

        for i in range(n_graders):
            acc[i] = 0.0
        for i in range(n_obs):
            resid = values[i] - scores[sub_idx[i]] - bias[grader_idx[i]]
            acc[grader_idx[i]] += resid * resid
        for i in range(n_graders):
            if update_rel[i]:
                new_val = (alpha - 1.0 + 0.5 * n_per_grader[i]) / (beta + 0.5 * acc[i])
                if new_val < rel_floor:
                    new_val = rel_floor
                d = fabs(new_val - rel[i])
                if d > max_delta:
                    max_delta = d
                rel[i] = new_val

        objective = 0.0
        for i in range(n_obs):
            g = grader_idx[i]
            r = rel[g]
            resid = values[i] - scores[sub_idx[i]] - bias[g]
            objective += 0.5 * log(r) - 0.5 * r * resid * resid
        for i in range(n_subs):
            d = scores[i] - prior_mu[i]
            objective -= 0.5 * prior_prec[i] * d * d
        for i in range(n_graders):
            if update_bias[i]:
                objective -= 0.5 * bias_prec * bias[i] * bias[i]
            if update_rel[i]:
                objective += (alpha - 1.0) * log(rel[i]) - beta * rel[i]
    finally:
        free(num)
        free(den)
        free(acc)
    return objective, max_delta


def em_objective(
    const double[::1] values,
    const int64_t[::1] sub_idx,
    const int64_t[::1] grader_idx,
    const double[::1] scores,
    const double[::1] bias,
    const double[::1] rel,
    const double[::1] prior_mu,
    const double[::1] prior_prec,
    double bias_prec,
    double alpha,
    double beta,
    const uint8_t[::1] update_bias,
    const uint8_t[::1] update_rel,
):
    """Joint log posterior at the current parameters (no updates)."""
    cdef Py_ssize_t i, g
    cdef double r, resid, d
    cdef double objective = 0.0
    for i in range(values.shape[0]):
        g = grader_idx[i]
        r = rel[g]
        resid = values[i] - scores[sub_idx[i]] - bias[g]
        objective += 0.5 * log(r) - 0.5 * r * resid * resid
    for i in range(scores.shape[0]):
        d = scores[i] - prior_mu[i]
        objective -= 0.5 * prior_prec[i] * d * d
    for i in range(bias.shape[0]):
        if update_bias[i]:
            objective -= 0.5 * bias_prec * bias[i] * bias[i]
        if update_rel[i]:
            objective += (alpha - 1.0) * log(rel[i]) - beta * rel[i]
    return objective


def pair_epoch_scores(
    const int64_t[::1] winners,
    const int64_t[::1] losers,
    const int64_t[::1] graders,
    const int64_t[::1] order,
    double[::1] latent,
    const double[::1] rel,
    double prior_mu,
    const double[::1] prior_shrink,
    double step,
    bint probit,
):
    """One SGD epoch over pairwise comparisons, updating latent scores."""
    cdef Py_ssize_t t, p, w, l
    cdef double r, z, g
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
    const int64_t[::1] winners,
    const int64_t[::1] losers,
    const int64_t[::1] graders,
    const int64_t[::1] order,
    const double[::1] latent,
    double[::1] rel,
    double alpha,
    double beta,
    const double[::1] rel_scaled,
    double step,
    bint probit,
):
    """One SGD epoch over pairwise comparisons, updating grader reliabilities."""
    cdef Py_ssize_t t, p, g
    cdef double r, z, grad
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
        r = r * exp(step * grad)
        if r < _REL_MIN:
            r = _REL_MIN
        elif r > _REL_MAX:
            r = _REL_MAX
        rel[g] = r


def pair_objective(
    const int64_t[::1] winners,
    const int64_t[::1] losers,
    const int64_t[::1] graders,
    const double[::1] latent,
    const double[::1] rel,
    bint probit,
):
    """Pairwise log likelihood at the current latent scores."""
    cdef Py_ssize_t p
    cdef double z
    cdef double total = 0.0
    for p in range(winners.shape[0]):
        z = rel[graders[p]] * (latent[winners[p]] - latent[losers[p]])
        if probit:
            total += _log_norm_cdf(z)
        else:
            total += _log_sigmoid(z)
    return total


cdef Py_ssize_t _max_len(const int64_t[::1] lens) noexcept nogil:
    cdef Py_ssize_t i
    cdef int64_t m = 1
    for i in range(lens.shape[0]):
        if lens[i] > m:
            m = lens[i]
    return <Py_ssize_t> m


def listwise_epoch_scores(
    const int64_t[::1] items,
    const int64_t[::1] starts,
    const int64_t[::1] lens,
    const int64_t[::1] ballot_graders,
    const int64_t[::1] order,
    double[::1] latent,
    const double[::1] rel,
    double prior_mu,
    const double[::1] prior_shrink,
    double step,
):
    """One SGD epoch over ballots; one batched gradient step per ballot."""
    cdef Py_ssize_t cap = _max_len(lens)
    cdef double *z = <double *> malloc(cap * sizeof(double))
    cdef double *grad = <double *> malloc(cap * sizeof(double))
    cdef double *prob = <double *> malloc(cap * sizeof(double))
    if z == NULL or grad == NULL or prob == NULL:
        free(z); free(grad); free(prob)
        raise MemoryError()
    cdef Py_ssize_t t, b, m, off, i, stage, j, it
    cdef double r, zmax, ssum
    try:
        for t in range(order.shape[0]):
            b = order[t]
            m = lens[b]
            off = starts[b]
            r = rel[ballot_graders[b]]
            for i in range(m):
                z[i] = r * latent[items[off + i]]
                grad[i] = 0.0
            for stage in range(m - 1):
                zmax = z[stage]
                for j in range(stage + 1, m):
                    if z[j] > zmax:
                        zmax = z[j]
                ssum = 0.0
                for j in range(stage, m):
                    prob[j] = exp(z[j] - zmax)
                    ssum += prob[j]
                for j in range(stage, m):
                    prob[j] /= ssum
                grad[stage] += r * (1.0 - prob[stage])
                for j in range(stage + 1, m):
                    grad[j] -= r * prob[j]
            for i in range(m):
                it = items[off + i]
                latent[it] = prior_mu + (latent[it] + step * grad[i] - prior_mu) * prior_shrink[it]
    finally:
        free(z)
        free(grad)
        free(prob)


def listwise_epoch_rel(
    const int64_t[::1] items,
    const int64_t[::1] starts,
    const int64_t[::1] lens,
    const int64_t[::1] ballot_graders,
    const int64_t[::1] order,
    const double[::1] latent,
    double[::1] rel,
    double alpha,
    double beta,
    const double[::1] rel_scaled,
    double step,
):
    """One SGD epoch over ballots, updating reliabilities (log-space step)."""
    cdef Py_ssize_t cap = _max_len(lens)
    cdef double *z = <double *> malloc(cap * sizeof(double))
    cdef double *prob = <double *> malloc(cap * sizeof(double))
    if z == NULL or prob == NULL:
        free(z); free(prob)
        raise MemoryError()
    cdef Py_ssize_t t, b, m, off, i, stage, j, g
    cdef double r, zmax, ssum, mean_z, grad
    try:
        for t in range(order.shape[0]):
            b = order[t]
            m = lens[b]
            off = starts[b]
            g = ballot_graders[b]
            r = rel[g]
            for i in range(m):
                z[i] = r * latent[items[off + i]]
            grad = 0.0
            for stage in range(m - 1):
                zmax = z[stage]
                for j in range(stage + 1, m):
                    if z[j] > zmax:
                        zmax = z[j]
                ssum = 0.0
                for j in range(stage, m):
                    prob[j] = exp(z[j] - zmax)
                    ssum += prob[j]
                mean_z = 0.0
                for j in range(stage, m):
                    prob[j] /= ssum
                    mean_z += prob[j] * z[j]
                grad += z[stage] - mean_z
            grad += rel_scaled[g] * ((alpha - 1.0) - beta * r)
            r = r * exp(step * grad)
            if r < _REL_MIN:
                r = _REL_MIN
            elif r > _REL_MAX:
                r = _REL_MAX
            rel[g] = r
    finally:
        free(z)
        free(prob)


def listwise_objective(
    const int64_t[::1] items,
    const int64_t[::1] starts,
    const int64_t[::1] lens,
    const int64_t[::1] ballot_graders,
    const double[::1] latent,
    const double[::1] rel,
):
    """Log likelihood of all ballots under the sequential-choice model."""
    cdef Py_ssize_t cap = _max_len(lens)
    cdef double *z = <double *> malloc(cap * sizeof(double))
    if z == NULL:
        raise MemoryError()
    cdef Py_ssize_t b, m, off, i, stage, j
    cdef double r, zmax, ssum
    cdef double total = 0.0
    try:
        for b in range(lens.shape[0]):
            m = lens[b]
            off = starts[b]
            r = rel[ballot_graders[b]]
            for i in range(m):
                z[i] = r * latent[items[off + i]]
            for stage in range(m - 1):
                zmax = z[stage]
                for j in range(stage + 1, m):
                    if z[j] > zmax:
                        zmax = z[j]
                ssum = 0.0
                for j in range(stage, m):
                    ssum += exp(z[j] - zmax)
                total += z[stage] - (zmax + log(ssum))
    finally:
        free(z)
    return total


def kendall_error_sum(const double[::1] x, const double[::1] y):
    """Sum of per-pair inversion penalties (0 agree, 1 invert, 0.5 one-sided tie)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double xi, yi, dx, dy
    cdef double total = 0.0
    for i in range(n - 1):
        xi = x[i]
        yi = y[i]
        for j in range(i + 1, n):
            dx = xi - x[j]
            dy = yi - y[j]
            if dx == 0.0 and dy == 0.0:
                continue
            elif dx == 0.0 or dy == 0.0:
                total += 0.5
            elif (dx > 0.0) != (dy > 0.0):
                total += 1.0
    return total
