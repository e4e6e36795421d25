"""Timing comparison of the compiled stepping kernel against the pure-Python
fallback on identical workloads (the trajectories themselves are bit-equal,
which is asserted before timing).

Usage: python benchmarks/engine_bench.py [--steps 200000]
"""

import argparse
import time

import numpy as np

from interurn import (
    DirichletColumns,
    SingleBallMultinomial,
    SystemSpec,
    UrnSpec,
    validate_spec,
)
from interurn.simulate import HAVE_KERNEL, run

H1 = np.array([[0.75, 0.5], [0.25, 0.5]])
H2 = np.array([[7 / 8, 1 / 8], [1 / 8, 7 / 8]])
H3 = np.array([[0.6, 0.3, 0.1], [0.3, 0.4, 0.5], [0.1, 0.3, 0.4]])


def workloads():
    two = validate_spec(
        SystemSpec(
            K=2,
            W=np.array([[0.8, 0.2], [0.2, 0.8]]),
            urns=(UrnSpec(SingleBallMultinomial(H1)), UrnSpec(SingleBallMultinomial(H2))),
        )
    )
    four = validate_spec(
        SystemSpec(
            K=3,
            W=np.full((4, 4), 0.25),
            urns=(
                UrnSpec(SingleBallMultinomial(H3)),
                UrnSpec(SingleBallMultinomial(H3)),
                UrnSpec(DirichletColumns(H3, kappa=6.0)),
                UrnSpec(SingleBallMultinomial(H3)),
            ),
        )
    )
    return [("2 urns / 2 colors (single-ball)", two), ("4 urns / 3 colors (mixed)", four)]


def time_engine(system, steps, engine, seed=12345):
    t0 = time.perf_counter()
    tr = run(system, steps, seed, checkpoints=(steps,), engine=engine)
    return time.perf_counter() - t0, tr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200000)
    args = ap.parse_args()

    if not HAVE_KERNEL:
        print("compiled kernel not available; build it with `pip install -e .`")
        return

    print(f"{'workload':<34} {'python':>12} {'cython':>12} {'speedup':>9}")
    for name, system in workloads():
        t_py, tr_py = time_engine(system, args.steps, "python")
        t_cy, tr_cy = time_engine(system, args.steps, "cython")
        assert np.array_equal(tr_py.z, tr_cy.z), "engines diverged"
        rate_py = args.steps / t_py
        rate_cy = args.steps / t_cy
        print(
            f"{name:<34} {rate_py:>9.0f}/s {rate_cy:>9.0f}/s {t_py / t_cy:>8.1f}x"
        )


if __name__ == "__main__":
    main()
