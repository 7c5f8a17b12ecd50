#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the four hot loops on a mid-size synthetic workload and checks that
both backends agree numerically.  Run with:

    python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from peergrade._kernels import backends


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def em_workload(rng, n_subs=500, n_graders=100, n_obs=3000):
    grader_idx = rng.integers(0, n_graders, n_obs).astype(np.int64)
    return dict(
        values=rng.uniform(0, 1, n_obs),
        sub_idx=rng.integers(0, n_subs, n_obs).astype(np.int64),
        grader_idx=grader_idx,
        prior_mu=np.full(n_subs, 0.5),
        prior_prec=np.full(n_subs, 36.0),
        bias_prec=36.0,
        alpha=3.0,
        beta=1.0 / 30.0,
        n_per_grader=np.bincount(grader_idx, minlength=n_graders).astype(np.int64),
        update_bias=np.ones(n_graders, dtype=np.uint8),
        update_rel=np.ones(n_graders, dtype=np.uint8),
        rel_floor=1e-6,
    ), dict(
        scores=rng.uniform(0, 1, n_subs),
        bias=rng.normal(0, 0.1, n_graders),
        rel=rng.gamma(3.0, 30.0, n_graders),
    )


def pair_workload(rng, n_items=100, n_graders=100, n_pairs=1500):
    winners = rng.integers(0, n_items, n_pairs).astype(np.int64)
    losers = ((winners + 1 + rng.integers(0, n_items - 1, n_pairs)) % n_items).astype(np.int64)
    graders = rng.integers(0, n_graders, n_pairs).astype(np.int64)
    touches = np.bincount(np.concatenate([winners, losers]), minlength=n_items)
    return dict(
        winners=winners,
        losers=losers,
        graders=graders,
        order=rng.permutation(n_pairs).astype(np.int64),
        rel=rng.gamma(10.0, 0.5, n_graders),
        prior_shrink=np.exp(-0.05 * 18.0 / np.maximum(touches, 1)),
    ), rng.uniform(0, 1, n_items)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=50, help="SGD epochs per timing run")
    args = parser.parse_args()

    impls = backends()
    if "cython" not in impls:
        print("compiled extension not available; only timing the python backend")

    rng = np.random.default_rng(0)
    em_args, em_state = em_workload(rng)
    pair_args, latent0 = pair_workload(rng)
    kx = rng.uniform(0, 1, 400)
    ky = rng.uniform(0, 1, 400)

    rows = []
    results = {}
    for name, impl in impls.items():
        state = {k: v.copy() for k, v in em_state.items()}

        def em_run(impl=impl, state=state):
            for _ in range(50):
                impl.em_sweep(
                    em_args["values"], em_args["sub_idx"], em_args["grader_idx"],
                    state["scores"], state["bias"], state["rel"],
                    em_args["prior_mu"], em_args["prior_prec"], em_args["bias_prec"],
                    em_args["alpha"], em_args["beta"], em_args["n_per_grader"],
                    em_args["update_bias"], em_args["update_rel"], em_args["rel_floor"],
                )

        latent = latent0.copy()

        def sgd_run(impl=impl, latent=latent):
            for _ in range(args.epochs):
                impl.pair_epoch_scores(
                    pair_args["winners"], pair_args["losers"], pair_args["graders"],
                    pair_args["order"], latent, pair_args["rel"],
                    0.5, pair_args["prior_shrink"], 0.01, False,
                )

        def kendall_run(impl=impl):
            impl.kendall_error_sum(kx, ky)

        t_em = timeit(em_run, args.repeats)
        t_sgd = timeit(sgd_run, args.repeats)
        t_k = timeit(kendall_run, args.repeats)
        rows.append((name, t_em, t_sgd, t_k))
        results[name] = (state, latent)

    print(f"{'backend':<10} {'50 EM sweeps':>14} {f'{args.epochs} SGD epochs':>16} {'kendall n=400':>14}")
    for name, t_em, t_sgd, t_k in rows:
        print(f"{name:<10} {t_em * 1e3:>11.2f} ms {t_sgd * 1e3:>13.2f} ms {t_k * 1e3:>11.2f} ms")
    if len(rows) == 2:
        base = {name: (t_em, t_sgd, t_k) for name, t_em, t_sgd, t_k in rows}
        speedup = [base["python"][i] / base["cython"][i] for i in range(3)]
        print(f"{'speedup':<10} {speedup[0]:>13.1f}x {speedup[1]:>15.1f}x {speedup[2]:>13.1f}x")
        for key in ("scores", "bias", "rel"):
            np.testing.assert_allclose(
                results["cython"][0][key], results["python"][0][key],
                rtol=1e-9, atol=1e-12,
            )
        np.testing.assert_allclose(results["cython"][1], results["python"][1],
                                   rtol=1e-9, atol=1e-12)
        print("numerical agreement: OK (allclose rtol=1e-9)")


if __name__ == "__main__":
    main()
