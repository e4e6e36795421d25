"""Exact discrete-time simulation of the interacting urn dynamics.

Each step samples one color per urn from the W-mixed proportions of the
pre-step state, then adds the replacement column drawn from that urn's model;
all urns advance synchronously. Replications use independent Philox streams
spawned from a base seed, so results do not depend on how replications are
distributed over workers. A compiled kernel is used when available; the
pure-Python fallback produces bit-identical trajectories.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidCheckpoint
from ..model import ValidatedSystem
from . import _engine_py

try:
    from . import _kernel

    HAVE_KERNEL = True
except ImportError:  # compiled extension not built; fall back to pure Python
    _kernel = None
    HAVE_KERNEL = False

DEFAULT_ENGINE = "cython" if HAVE_KERNEL else "python"


def available_engines():
    return ("cython", "python") if HAVE_KERNEL else ("python",)


def _engine_fn(engine):
    if engine is None:
        engine = DEFAULT_ENGINE
    if engine == "cython":
        if not HAVE_KERNEL:
            raise RuntimeError("compiled kernel is not available; build the extension")
        return _kernel.run_trajectory, "cython"
    if engine == "python":
        return _engine_py.run_trajectory, "python"
    raise ValueError(f"unknown engine {engine!r}")


@dataclass(frozen=True, eq=False)
class UrnState:
    """Compositions Y (N,K), totals T (N,), and the step counter."""

    y: np.ndarray
    t: np.ndarray
    n: int

    @property
    def z(self):
        return self.y / self.t[:, None]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of one simulated path at the requested checkpoint steps."""

    checkpoints: tuple[int, ...]
    z: np.ndarray  # (C, N, K)
    t: np.ndarray  # (C, N)
    t0: np.ndarray  # (N,) initial totals
    seed: object
    fingerprint: str
    engine: str


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Cross-replication snapshots and summary statistics at each checkpoint."""

    checkpoints: tuple[int, ...]
    z: np.ndarray  # (C, R, N, K)
    t: np.ndarray  # (C, R, N)
    t0: np.ndarray  # (N,)
    base_seed: object
    seeds: tuple
    reference: np.ndarray | None  # (N, K) limiting proportions
    scaled: np.ndarray | None  # (C, R, N, K): sqrt(step) * (z - reference)
    fingerprint: str

    @property
    def reps(self):
        return self.z.shape[1]

    def mean_z(self, ci=-1):
        return self.z[ci].mean(axis=0)

    def se_z(self, ci=-1):
        r = self.reps
        return self.z[ci].std(axis=0, ddof=1) / np.sqrt(r)

    def flat_z(self, ci=-1):
        """(R, N*K) view of the snapshot at one checkpoint."""
        return self.z[ci].reshape(self.reps, -1)

    def cov_z(self, ci=-1):
        x = self.flat_z(ci)
        m = x.mean(axis=0)
        d = x - m
        return d.T @ d / (self.reps - 1)

    def scaled_flat(self, ci=-1):
        if self.scaled is None:
            raise ValueError("ensemble was built without a reference")
        return self.scaled[ci].reshape(self.reps, -1)

    def scaled_cov(self, ci=-1):
        x = self.scaled_flat(ci)
        m = x.mean(axis=0)
        d = x - m
        return d.T @ d / (self.reps - 1)


def _normalize_checkpoints(checkpoints, n_steps):
    if checkpoints is None:
        checkpoints = (n_steps,)
    cps = [int(c) for c in checkpoints]
    if not cps:
        raise InvalidCheckpoint("at least one checkpoint is required")
    if any(c < 0 or c > n_steps for c in cps):
        raise InvalidCheckpoint(f"checkpoints must lie in [0, {n_steps}]")
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise InvalidCheckpoint("checkpoints must be strictly increasing")
    return tuple(cps)


def _engine_arrays(system: ValidatedSystem):
    fam = np.array([m.code for m in system.urns], dtype=np.int32)
    H = np.ascontiguousarray(np.stack([m.H for m in system.urns]))
    kappa = np.array(
        [m.kappa if m.kappa is not None else 0.0 for m in system.urns]
    )
    return fam, H, kappa


def run(system: ValidatedSystem, n_steps, seed, checkpoints=None, engine=None) -> Trajectory:
    """Simulate one trajectory, recording Z and T at the checkpoint steps."""
    n_steps = int(n_steps)
    cps = _normalize_checkpoints(checkpoints, n_steps)
    fn, engine_name = _engine_fn(engine)
    fam, H, kappa = _engine_arrays(system)

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    bitgen = np.random.Philox(ss)

    y = system.initial.copy()
    t = y.sum(axis=1)
    t0 = t.copy()
    z_out = np.empty((len(cps), system.N, system.K))
    t_out = np.empty((len(cps), system.N))
    fn(y, t, system.W, fam, H, kappa, n_steps, np.array(cps, dtype=np.int64), bitgen, z_out, t_out)
    return Trajectory(
        checkpoints=cps,
        z=z_out,
        t=t_out,
        t0=t0,
        seed=seed,
        fingerprint=system.fingerprint(),
        engine=engine_name,
    )


def step(state: UrnState, system: ValidatedSystem, rng) -> UrnState:
    """One synchronous step of the dynamics from the given state."""
    bitgen = rng.bit_generator if isinstance(rng, np.random.Generator) else rng
    fam, H, kappa = _engine_arrays(system)
    y, t = _engine_py.step_arrays(state.y, state.t, system.W, fam, H, kappa, bitgen)
    return UrnState(y=y, t=t, n=state.n + 1)


def initial_state(system: ValidatedSystem) -> UrnState:
    y = system.initial.copy()
    return UrnState(y=y, t=y.sum(axis=1), n=0)


def _run_one(args):
    system, n_steps, entropy, spawn_key, cps, engine = args
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key)
    return run(system, n_steps, ss, cps, engine)


def ensemble(
    system: ValidatedSystem,
    n_steps,
    reps,
    base_seed,
    checkpoints=None,
    reference=None,
    workers=1,
    engine=None,
) -> EnsembleStats:
    """Independent replications with per-replication seeds spawned from base_seed.

    Aggregation is by replication index, so the result is bit-identical no
    matter how many workers execute the runs.
    """
    if reps < 2:
        raise ValueError("an ensemble needs at least 2 replications")
    n_steps = int(n_steps)
    cps = _normalize_checkpoints(checkpoints, n_steps)
    children = np.random.SeedSequence(base_seed).spawn(reps)

    if workers <= 1:
        trajectories = [run(system, n_steps, ss, cps, engine) for ss in children]
    else:
        jobs = [
            (system, n_steps, ss.entropy, ss.spawn_key, cps, engine) for ss in children
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_run_one, jobs))

    return stats_from_trajectories(
        trajectories,
        base_seed=base_seed,
        seeds=tuple((base_seed, i) for i in range(reps)),
        reference=reference,
    )


def stats_from_trajectories(trajectories, base_seed=None, seeds=None, reference=None) -> EnsembleStats:
    """Aggregate already-simulated replications (associative, order fixed by the list)."""
    first = trajectories[0]
    cps = first.checkpoints
    for tr in trajectories:
        if tr.checkpoints != cps or tr.fingerprint != first.fingerprint:
            raise ValueError("trajectories are not comparable")
    z = np.stack([tr.z for tr in trajectories], axis=1)
    t = np.stack([tr.t for tr in trajectories], axis=1)
    scaled = None
    ref = None
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        steps = np.array(cps, dtype=float)
        scaled = np.sqrt(steps)[:, None, None, None] * (z - ref[None, None])
    return EnsembleStats(
        checkpoints=cps,
        z=z,
        t=t,
        t0=first.t0,
        base_seed=base_seed,
        seeds=seeds if seeds is not None else tuple(tr.seed for tr in trajectories),
        reference=ref,
        scaled=scaled,
        fingerprint=first.fingerprint,
    )
