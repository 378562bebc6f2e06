#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--chunks 5000] [--dim 384]
                                        [--steps 400] [--topk 50] [--repeat 7]

The same workloads run through both implementations (when numba is
available), printing per-kernel timings and the speedup. Set
MULTIRAG_DISABLE_NUMBA=1 before launching to check what the package
itself would fall back to.
"""

import argparse
import time

import numpy as np

from multirag import kernels


def time_fn(fn, *args, repeat: int) -> float:
    fn(*args)  # warm-up (JIT compile, caches)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def build_distribution_arrays(rng, n_steps: int, top_k: int, vocab: int):
    lens = np.full(n_steps, top_k, dtype=np.int64)
    probs = np.zeros((n_steps, top_k))
    tails = np.empty(n_steps)
    for i in range(n_steps):
        full = rng.dirichlet([0.5] * vocab)
        top = np.sort(full)[::-1][:top_k]
        probs[i] = top
        tails[i] = max(0.0, 1.0 - top.sum())
    vocabs = np.full(n_steps, vocab, dtype=np.int64)
    return probs, lens, tails, vocabs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--chunks", type=int, default=5000)
    parser.add_argument("--dim", type=int, default=384)
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--topk", type=int, default=50)
    parser.add_argument("--vocab", type=int, default=32000)
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    query = rng.normal(size=args.dim)
    matrix = rng.normal(size=(args.chunks, args.dim))
    probs, lens, tails, vocabs = build_distribution_arrays(
        rng, args.steps, args.topk, args.vocab)
    chosen = rng.uniform(1e-6, 1.0, size=args.steps)

    workloads = [
        ("cosine_scores", "_cosine_scores", (query, matrix)),
        ("step_entropies", "_step_entropies", (probs, lens, tails, vocabs, 1e-12)),
        ("gini_per_step", "_gini_per_step", (probs, lens, tails, vocabs)),
        ("self_certainty_per_step", "_self_certainty_per_step",
         (probs, lens, tails, vocabs, 1e-12)),
        ("avg_log_p_kernel", "_avg_log_p", (chosen, 1e-12)),
    ]

    print(f"chunks={args.chunks} dim={args.dim} steps={args.steps} "
          f"topk={args.topk} vocab={args.vocab} repeat={args.repeat}")
    print(f"numba available: {kernels.HAVE_NUMBA}\n")
    header = f"{'kernel':<26} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, prefix, call_args in workloads:
        np_fn = getattr(kernels, f"{prefix}_np")
        t_np = time_fn(np_fn, *call_args, repeat=args.repeat)
        if kernels.HAVE_NUMBA:
            nb_fn = getattr(kernels, f"{prefix}_nb")
            t_nb = time_fn(nb_fn, *call_args, repeat=args.repeat)
            print(f"{name:<26} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} "
                  f"{t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<26} {t_np * 1e3:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
