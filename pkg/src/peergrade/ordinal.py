"""Rank-aggregation estimators over ordinal ballots.

Four fitters share one output shape: position-count scoring (``borda``), two
pairwise-comparison models with per-grader reliability (``bt_fit`` with a
logistic link, ``thurstone_fit`` with a probit link), and a listwise
sequential-choice model (``pl_fit``).  The probabilistic fits maximize the
ballot likelihood plus a Normal prior on the latent scores (and a Gamma prior
on reliabilities when those are estimated) by stochastic gradient ascent:
epochs over shuffled pairs/ballots with a 1/sqrt(epoch) step decay,
alternating score and reliability epochs when reliability estimation is on.

Tie handling follows the data: pairwise models drop tied pairs, the listwise
model requires strict ballots and falls back to the pairwise pipeline (with a
warning) when ties are present.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from peergrade._kernels import active as _kernel
from peergrade.cardinal import ModelFit
from peergrade.data import OrdinalBallot
from peergrade.errors import EstimatorError
from peergrade.synth import replicate_seed


@dataclass(frozen=True)
class PairComparison:
    """One implied pairwise comparison (winner beat loser for this grader)."""

    exercise: str
    winner: str
    loser: str
    grader: str


@dataclass(frozen=True)
class NormalPrior:
    mean: float = 0.5
    var: float = 1.0 / 36.0


@dataclass(frozen=True)
class GammaPrior:
    shape: float = 10.0
    rate: float = 2.0


@dataclass(frozen=True)
class SgdConfig:
    step: float = 0.05
    epochs: int = 200
    seed: int = 0
    tol: float = 1e-3
    rel_init: float | None = None  # None: 1.0 fixed / prior mean when estimated


@dataclass
class OrdinalFit:
    """Latent scores per (exercise, submission), optional reliabilities."""

    model: str
    latent: dict[tuple[str, str], float]
    reliability: dict[str, float]
    objective_trace: list[float]
    iterations: int
    converged: bool
    meta: dict = field(default_factory=dict)

    def to_model_fit(self) -> ModelFit:
        """Repackage with latent scores in the score slots (same fit.json shape)."""
        return ModelFit(
            model=self.model,
            scores=dict(self.latent),
            bias={},
            reliability=dict(self.reliability),
            objective_trace=list(self.objective_trace),
            iterations=self.iterations,
            converged=self.converged,
            meta=dict(self.meta),
        )


def ballots_to_pairs(ballots) -> list[PairComparison]:
    """Full rank-breaking: one pair per ordered tie-group pair of a ballot.

    Submissions inside the same tie-group yield no pair.
    """
    pairs = []
    for b in ballots:
        for lo in range(len(b.ranking)):
            for hi in range(lo + 1, len(b.ranking)):
                for winner in b.ranking[hi]:
                    for loser in b.ranking[lo]:
                        pairs.append(PairComparison(b.exercise, winner, loser, b.grader))
    return pairs


def borda(ballots) -> OrdinalFit:
    """Position-count scores: per ballot, each submission earns the number of
    submissions ranked strictly below it; ties earn the mean of the positions
    their group spans; scores are summed over ballots."""
    if not ballots:
        raise EstimatorError("no ballots to aggregate")
    latent: dict[tuple[str, str], float] = {}
    for b in ballots:
        position = 0
        for group in b.ranking:
            value = position + (len(group) - 1) / 2.0
            for s in group:
                key = (b.exercise, s)
                latent[key] = latent.get(key, 0.0) + value
            position += len(group)
    return OrdinalFit(
        model="borda",
        latent=dict(sorted(latent.items())),
        reliability={},
        objective_trace=[],
        iterations=0,
        converged=True,
        meta={},
    )


def pair_win_probability(score_gap: float, reliability: float = 1.0, link: str = "logistic") -> float:
    """Probability that the higher-scored item of a pair wins a comparison."""
    z = reliability * score_gap
    if link == "logistic":
        return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    if link == "probit":
        return 0.5 * math.erfc(-z / math.sqrt(2.0))
    raise ValueError(f"unknown link {link!r}")


def _components(n_items, edges):
    parent = list(range(n_items))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return [find(i) for i in range(n_items)]


def _group_by_exercise(ballots):
    by_ex: dict[str, list[OrdinalBallot]] = {}
    for b in ballots:
        by_ex.setdefault(b.exercise, []).append(b)
    return by_ex


def _prior_for(prior, exercise) -> NormalPrior:
    # fitters accept one prior for everything or a per-exercise mapping
    if isinstance(prior, NormalPrior):
        return prior
    return prior.get(exercise, NormalPrior())


def _pairwise_fit(ballots, prior, rel_prior, sgd, estimate_reliability, probit, model_name):
    if not ballots:
        raise EstimatorError("no ballots to fit")
    by_ex = _group_by_exercise(ballots)
    latent_out: dict[tuple[str, str], float] = {}
    rel_out: dict[str, float] = {}
    trace_total = np.zeros(sgd.epochs + 1)
    converged = True

    for ei, exercise in enumerate(sorted(by_ex)):
        ex_ballots = by_ex[exercise]
        ex_prior = _prior_for(prior, exercise)
        items = sorted({s for b in ex_ballots for s in b.submissions()})
        graders = sorted({b.grader for b in ex_ballots})
        item_idx = {s: i for i, s in enumerate(items)}
        grader_idx = {g: i for i, g in enumerate(graders)}
        pairs = ballots_to_pairs(ex_ballots)

        winners = np.array([item_idx[p.winner] for p in pairs], dtype=np.int64)
        losers = np.array([item_idx[p.loser] for p in pairs], dtype=np.int64)
        pair_graders = np.array([grader_idx[p.grader] for p in pairs], dtype=np.int64)

        comp = _components(len(items), zip(winners.tolist(), losers.tolist()))
        n_components = len(set(comp))
        if n_components > 1:
            warnings.warn(
                f"exercise {exercise!r}: comparison graph has {n_components} "
                "weakly connected components; component means are pinned to the prior mean",
                stacklevel=3,
            )

        touches = np.bincount(np.concatenate([winners, losers]), minlength=len(items))
        prior_prec = 1.0 / ex_prior.var
        prior_scaled = np.where(touches > 0, prior_prec / np.maximum(touches, 1), 0.0)
        grader_touches = np.bincount(pair_graders, minlength=len(graders))
        rel_scaled = 1.0 / np.maximum(grader_touches, 1)

        latent = np.full(len(items), float(ex_prior.mean))
        if estimate_reliability:
            rel_init = sgd.rel_init if sgd.rel_init is not None else rel_prior.shape / rel_prior.rate
        else:
            rel_init = sgd.rel_init if sgd.rel_init is not None else 1.0
        rel = np.full(len(graders), float(rel_init))

        rng = np.random.Generator(np.random.PCG64(replicate_seed(sgd.seed, ei)))
        trace = [_pair_map_objective(
            winners, losers, pair_graders, latent, rel, ex_prior, rel_prior,
            estimate_reliability, probit,
        )]
        last_delta = math.inf
        for epoch in range(1, sgd.epochs + 1):
            step = sgd.step / math.sqrt(epoch)
            order = rng.permutation(len(pairs)).astype(np.int64)
            if estimate_reliability and epoch % 2 == 0:
                _kernel.pair_epoch_rel(
                    winners, losers, pair_graders, order, latent, rel,
                    rel_prior.shape, rel_prior.rate, rel_scaled, step, probit,
                )
            else:
                prev = latent.copy()
                shrink = np.exp(-step * prior_scaled)
                _kernel.pair_epoch_scores(
                    winners, losers, pair_graders, order, latent, rel,
                    ex_prior.mean, shrink, step, probit,
                )
                last_delta = float(np.max(np.abs(latent - prev))) if len(items) else 0.0
            trace.append(_pair_map_objective(
                winners, losers, pair_graders, latent, rel, ex_prior, rel_prior,
                estimate_reliability, probit,
            ))

        if n_components > 1:
            comp_arr = np.asarray(comp)
            for c in set(comp):
                mask = comp_arr == c
                latent[mask] += ex_prior.mean - latent[mask].mean()

        trace_total += np.asarray(trace)
        converged = converged and last_delta < sgd.tol
        for s, i in item_idx.items():
            latent_out[(exercise, s)] = float(latent[i])
        if estimate_reliability:
            for g, i in grader_idx.items():
                rel_out[g] = float(rel[i])

    return OrdinalFit(
        model=model_name,
        latent=dict(sorted(latent_out.items())),
        reliability=dict(sorted(rel_out.items())),
        objective_trace=[float(v) for v in trace_total],
        iterations=sgd.epochs,
        converged=converged,
        meta={
            "estimate_reliability": estimate_reliability,
            "prior": _prior_meta(prior),
            "rel_prior": {"shape": rel_prior.shape, "rate": rel_prior.rate},
        },
    )


def _prior_meta(prior):
    if isinstance(prior, NormalPrior):
        return {"mean": prior.mean, "var": prior.var}
    return {e: {"mean": p.mean, "var": p.var} for e, p in sorted(prior.items())}


def _pair_map_objective(winners, losers, graders, latent, rel, prior, rel_prior,
                        estimate_reliability, probit):
    obj = _kernel.pair_objective(winners, losers, graders, latent, rel, probit)
    obj -= 0.5 / prior.var * float(np.sum((latent - prior.mean) ** 2))
    if estimate_reliability:
        obj += float(np.sum((rel_prior.shape - 1.0) * np.log(rel) - rel_prior.rate * rel))
    return float(obj)


def bt_fit(
    ballots,
    prior: NormalPrior = NormalPrior(),
    rel_prior: GammaPrior = GammaPrior(),
    sgd: SgdConfig = SgdConfig(),
    estimate_reliability: bool = False,
) -> OrdinalFit:
    """Pairwise-comparison fit with a logistic link:
    P(winner beats loser) = 1 / (1 + exp(-reliability * score gap))."""
    return _pairwise_fit(ballots, prior, rel_prior, sgd, estimate_reliability, False, "bt")


def thurstone_fit(
    ballots,
    prior: NormalPrior = NormalPrior(),
    rel_prior: GammaPrior = GammaPrior(),
    sgd: SgdConfig = SgdConfig(),
    estimate_reliability: bool = False,
) -> OrdinalFit:
    """Pairwise-comparison fit with a probit link:
    P(winner beats loser) = Phi(reliability * score gap)."""
    return _pairwise_fit(ballots, prior, rel_prior, sgd, estimate_reliability, True, "thurstone")


def pl_fit(
    ballots,
    prior: NormalPrior = NormalPrior(),
    rel_prior: GammaPrior = GammaPrior(),
    sgd: SgdConfig = SgdConfig(),
    estimate_reliability: bool = False,
) -> OrdinalFit:
    """Listwise sequential-choice fit over strict ballots.

    Each ballot is read best-to-worst; at every stage the remaining item with
    weight exp(reliability * latent) is chosen.  Ballots with tie-groups are
    pair-broken into the pairwise (logistic) pipeline instead, with a warning.
    """
    if not ballots:
        raise EstimatorError("no ballots to fit")
    if any(len(group) > 1 for b in ballots for group in b.ranking):
        warnings.warn(
            "tied ballots cannot enter the listwise model; "
            "falling back to pairwise rank-breaking",
            stacklevel=2,
        )
        fit = _pairwise_fit(ballots, prior, rel_prior, sgd, estimate_reliability, False, "pl")
        fit.meta["tie_fallback"] = True
        return fit

    by_ex = _group_by_exercise(ballots)
    latent_out: dict[tuple[str, str], float] = {}
    rel_out: dict[str, float] = {}
    trace_total = np.zeros(sgd.epochs + 1)
    converged = True

    for ei, exercise in enumerate(sorted(by_ex)):
        ex_ballots = by_ex[exercise]
        ex_prior = _prior_for(prior, exercise)
        items = sorted({s for b in ex_ballots for s in b.submissions()})
        graders = sorted({b.grader for b in ex_ballots})
        item_idx = {s: i for i, s in enumerate(items)}
        grader_idx = {g: i for i, g in enumerate(graders)}

        flat, starts, lens, ballot_graders = [], [], [], []
        for b in ex_ballots:
            starts.append(len(flat))
            seq = [item_idx[group[0]] for group in reversed(b.ranking)]  # best first
            flat.extend(seq)
            lens.append(len(seq))
            ballot_graders.append(grader_idx[b.grader])
        flat = np.asarray(flat, dtype=np.int64)
        starts = np.asarray(starts, dtype=np.int64)
        lens = np.asarray(lens, dtype=np.int64)
        ballot_graders = np.asarray(ballot_graders, dtype=np.int64)

        edges = []
        for bi in range(len(ex_ballots)):
            seq = flat[starts[bi]:starts[bi] + lens[bi]]
            edges.extend((int(seq[i]), int(seq[i + 1])) for i in range(len(seq) - 1))
        comp = _components(len(items), edges)
        n_components = len(set(comp))
        if n_components > 1:
            warnings.warn(
                f"exercise {exercise!r}: ballots split into {n_components} "
                "disconnected groups; group means are pinned to the prior mean",
                stacklevel=2,
            )

        touches = np.bincount(flat, minlength=len(items))
        prior_scaled = np.where(touches > 0, (1.0 / ex_prior.var) / np.maximum(touches, 1), 0.0)
        grader_touches = np.bincount(ballot_graders, minlength=len(graders))
        rel_scaled = 1.0 / np.maximum(grader_touches, 1)

        latent = np.full(len(items), float(ex_prior.mean))
        if estimate_reliability:
            rel_init = sgd.rel_init if sgd.rel_init is not None else rel_prior.shape / rel_prior.rate
        else:
            rel_init = sgd.rel_init if sgd.rel_init is not None else 1.0
        rel = np.full(len(graders), float(rel_init))

        rng = np.random.Generator(np.random.PCG64(replicate_seed(sgd.seed, ei)))
        trace = [_listwise_map_objective(
            flat, starts, lens, ballot_graders, latent, rel, ex_prior, rel_prior,
            estimate_reliability,
        )]
        last_delta = math.inf
        for epoch in range(1, sgd.epochs + 1):
            step = sgd.step / math.sqrt(epoch)
            order = rng.permutation(len(ex_ballots)).astype(np.int64)
            if estimate_reliability and epoch % 2 == 0:
                _kernel.listwise_epoch_rel(
                    flat, starts, lens, ballot_graders, order, latent, rel,
                    rel_prior.shape, rel_prior.rate, rel_scaled, step,
                )
            else:
                prev = latent.copy()
                shrink = np.exp(-step * prior_scaled)
                _kernel.listwise_epoch_scores(
                    flat, starts, lens, ballot_graders, order, latent, rel,
                    ex_prior.mean, shrink, step,
                )
                last_delta = float(np.max(np.abs(latent - prev))) if len(items) else 0.0
            trace.append(_listwise_map_objective(
                flat, starts, lens, ballot_graders, latent, rel, ex_prior, rel_prior,
                estimate_reliability,
            ))

        if n_components > 1:
            comp_arr = np.asarray(comp)
            for c in set(comp):
                mask = comp_arr == c
                latent[mask] += ex_prior.mean - latent[mask].mean()

        trace_total += np.asarray(trace)
        converged = converged and last_delta < sgd.tol
        for s, i in item_idx.items():
            latent_out[(exercise, s)] = float(latent[i])
        if estimate_reliability:
            for g, i in grader_idx.items():
                rel_out[g] = float(rel[i])

    return OrdinalFit(
        model="pl",
        latent=dict(sorted(latent_out.items())),
        reliability=dict(sorted(rel_out.items())),
        objective_trace=[float(v) for v in trace_total],
        iterations=sgd.epochs,
        converged=converged,
        meta={
            "estimate_reliability": estimate_reliability,
            "prior": _prior_meta(prior),
            "rel_prior": {"shape": rel_prior.shape, "rate": rel_prior.rate},
        },
    )


def _listwise_map_objective(items, starts, lens, ballot_graders, latent, rel,
                            prior, rel_prior, estimate_reliability):
    obj = _kernel.listwise_objective(items, starts, lens, ballot_graders, latent, rel)
    obj -= 0.5 / prior.var * float(np.sum((latent - prior.mean) ** 2))
    if estimate_reliability:
        obj += float(np.sum((rel_prior.shape - 1.0) * np.log(rel) - rel_prior.rate * rel))
    return float(obj)


def latent_to_scores(
    fit: OrdinalFit,
    target_mean: float = 0.5,
    target_var: float = 1.0 / 36.0,
    clip: bool = False,
) -> dict[tuple[str, str], float]:
    """Affine-map latent scores, per exercise, to a target mean and variance.

    Rank order is preserved exactly; constant latents map to the target mean.
    """
    if target_var < 0:
        raise ValueError("target_var must be >= 0")
    by_ex: dict[str, list[tuple[str, float]]] = {}
    for (e, s), v in fit.latent.items():
        by_ex.setdefault(e, []).append((s, v))

    out = {}
    for e, pairs in by_ex.items():
        vals = np.array([v for _, v in pairs])
        mean = float(vals.mean())
        var = float(vals.var())
        if var == 0.0:
            mapped = np.full(len(vals), target_mean)
        else:
            mapped = target_mean + (vals - mean) * math.sqrt(target_var / var)
        if clip:
            mapped = np.clip(mapped, 0.0, 1.0)
        for (s, _), m in zip(pairs, mapped):
            out[(e, s)] = float(m)
    return dict(sorted(out.items()))
