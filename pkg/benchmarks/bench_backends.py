#!/usr/bin/env python3
"""Compare the compiled stepping kernel against the numpy fallback.

Runs the same batch integration through both backends and reports wall time
plus the worst relative disagreement of the final states.  The two backends
use the same increments, so they should agree to within a few ulps (the
compiled kernel is built with -ffp-contract=off for exactly this reason).

Usage:
    python benchmarks/bench_backends.py [--paths P] [--m-steps M] [--horizon T]
"""

import argparse
import time

import numpy as np

from sddej import (
    PowerPhi,
    Regime,
    SchemeTag,
    StepSize,
    TruncationConfig,
    compiled_backend_available,
    cubic_delay_benchmark,
    run_batch,
)
from sddej.noise import generate


def _increments(model, step, paths, seed):
    db = np.empty((step.steps, paths, model.brownian_dim))
    dn = np.empty((step.steps, paths), dtype=np.int64)
    for p in range(paths):
        bundle = generate(
            seed=seed, stream=p, horizon=step.horizon, base_dt=step.delta,
            brownian_dim=model.brownian_dim, lam=model.jump_intensity,
        )
        db[:, p, :] = bundle.d_brownian
        dn[:, p] = bundle.d_jumps
    return db, dn


def bench(paths: int, m_steps: int, horizon: float, repeats: int) -> None:
    model, _ = cubic_delay_benchmark(tau=0.25)
    trunc = TruncationConfig(
        phi=PowerPhi(5.0, 3.0), epsilon=0.125, regime=Regime.FG
    )
    step = StepSize(m_steps, model.delay, horizon)
    db, dn = _increments(model, step, paths, seed=42)
    print(
        f"model=section5 paths={paths} steps={step.steps} "
        f"delta={step.delta:.3g}"
    )

    results = {}
    for backend in ("python", "compiled"):
        if backend == "compiled" and not compiled_backend_available():
            print("compiled backend not available; skipping")
            continue
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = run_batch(
                model, trunc, step, db, dn, SchemeTag.TRUNCATED_FG,
                backend=backend,
            )
            best = min(best, time.perf_counter() - t0)
        results[backend] = (best, out.final)
        rate = paths * step.steps / best
        print(f"{backend:>9}: {best * 1e3:8.2f} ms  ({rate:.3g} path-steps/s)")

    if len(results) == 2:
        f_py, f_c = results["python"][1], results["compiled"][1]
        scale = np.maximum(np.abs(f_py), 1.0)
        worst = float(np.nanmax(np.abs(f_py - f_c) / scale))
        speedup = results["python"][0] / results["compiled"][0]
        print(f"speedup: {speedup:.1f}x   worst relative diff: {worst:.3g}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=512)
    ap.add_argument("--m-steps", type=int, default=1024,
                    help="steps per delay interval (delta = tau / m)")
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    bench(args.paths, args.m_steps, args.horizon, args.repeats)


if __name__ == "__main__":
    main()
