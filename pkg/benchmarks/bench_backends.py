"""Compare the compiled (numba) and pure-numpy kernel backends.

Runs each workload in a subprocess with LAGRANGEKIT_BACKEND pinned, so both
backends are measured from a clean import. Compilation happens during an
untimed warmup; the timed section measures steady-state rolls.

Usage: python benchmarks/bench_backends.py [--steps-ball N] [--steps-logreg N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time


def _workloads(steps_ball: int, steps_logreg: int):
    import numpy as np

    import lagrangekit as lk

    def ball():
        problem = lk.problem_projection_ball(np.array([3.0, 4.0]))
        optimizers = lk.PrimalDualOptimizers(
            primal=lk.GradientDescent(0.05),
            duals=lk.make_dual_optimizers(problem, lambda: lk.GradientAscent(0.05)),
        )
        return problem, optimizers, lk.roll_simultaneous

    def logreg():
        problem = lk.problem_norm_constrained_logreg(0, 1.0)
        optimizers = lk.PrimalDualOptimizers(
            primal=lk.AdamLike(1e-3),
            duals=lk.make_dual_optimizers(problem, lambda: lk.GradientAscent(1e-2)),
        )
        return problem, optimizers, lk.roll_extragradient

    return [
        ("projection_ball/simultaneous", ball, steps_ball),
        ("norm_logreg/extragradient", logreg, steps_logreg),
    ]


def _run_worker(steps_ball: int, steps_logreg: int) -> None:
    import lagrangekit as lk

    for name, build, steps in _workloads(steps_ball, steps_logreg):
        problem, optimizers, step_fn = build()
        for _ in range(min(50, steps)):  # untimed: jit compilation and caches
            step_fn(problem, optimizers)
        problem, optimizers, step_fn = build()
        start = time.perf_counter()
        for _ in range(steps):
            step_fn(problem, optimizers)
        elapsed = time.perf_counter() - start
        print(f"RESULT {name} {steps} {elapsed:.6f}")
    print(f"BACKEND {lk.BACKEND}")


def _parse_worker_output(text: str):
    results = {}
    backend = "?"
    for line in text.splitlines():
        if line.startswith("RESULT "):
            _, name, steps, secs = line.split()
            results[name] = (int(steps), float(secs))
        elif line.startswith("BACKEND "):
            backend = line.split()[1]
    return backend, results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps-ball", type=int, default=5000)
    parser.add_argument("--steps-logreg", type=int, default=5000)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        _run_worker(args.steps_ball, args.steps_logreg)
        return 0

    timings = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, LAGRANGEKIT_BACKEND=backend)
        proc = subprocess.run(
            [
                sys.executable,
                os.path.abspath(__file__),
                "--worker",
                "--steps-ball",
                str(args.steps_ball),
                "--steps-logreg",
                str(args.steps_logreg),
            ],
            env=env,
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            print(f"{backend} worker failed:\n{proc.stderr}", file=sys.stderr)
            return 1
        reported, results = _parse_worker_output(proc.stdout)
        if reported != backend:
            print(f"expected backend {backend}, worker ran {reported}", file=sys.stderr)
            return 1
        timings[backend] = results

    print(f"{'workload':34s} {'steps':>7s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s}")
    for name in timings["numba"]:
        steps, t_numba = timings["numba"][name]
        _, t_numpy = timings["numpy"][name]
        speedup = t_numpy / t_numba if t_numba > 0 else float("inf")
        print(f"{name:34s} {steps:7d} {t_numba:9.3f} {t_numpy:9.3f} {speedup:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
