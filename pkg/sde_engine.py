"""
Full-truncation Euler-Maruyama for dX^i = alpha_i X^i dt + sqrt(f_i(X) X^i) dB^i
on the non-negative orthant, with zero as an exact trap.

Noise is counter-based: the increment for (seed, path, step, component)
comes from a Philox stream keyed by (seed, path), so single paths, coupled
pairs and parallel batches all see identical draws.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np
import psutil

from coefficients import CoefficientModel

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_STRIDE = 10
DEFAULT_M = 1e6
BATCH_BYTES = 64 * 1024 * 1024

CPU_CORES = psutil.cpu_count(logical=False) or 1
CPU_THREADS = psutil.cpu_count(logical=True) or CPU_CORES

T = TypeVar("T")


class TrapMode(str, Enum):
    ABSORB_AT_ZERO = "AbsorbAtZero"


@dataclass(frozen=True)
class SimConfig:
    dt: float = DEFAULT_DT
    T: float = 1.0
    trap_mode: TrapMode = TrapMode.ABSORB_AT_ZERO
    M: float = DEFAULT_M
    seed: int = 0
    n_paths: int = 1
    record_stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError(f"dt and T must be positive (dt={self.dt}, T={self.T})")
        if self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds T={self.T}")
        if not self.M > 0:
            raise ValueError(f"explosion threshold M must be positive, got {self.M}")
        if self.n_paths < 1 or self.record_stride < 1:
            raise ValueError("n_paths and record_stride must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @property
    def record_steps(self) -> np.ndarray:
        steps = list(range(0, self.n_steps + 1, self.record_stride))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return np.asarray(steps, dtype=np.int64)

    def check_start(self, a: np.ndarray):
        if a.ndim != 1 or not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError(f"initial state must be a finite non-negative vector, got {a}")
        if not self.M > float(np.max(a, initial=0.0)):
            raise ValueError(f"M={self.M} must exceed the largest initial coordinate {float(np.max(a))}")


@dataclass(frozen=True)
class NoiseStream:
    """
    Brownian increments indexed by (path, step, component), scaled by sqrt(dt).
    Each path owns a Philox stream keyed by (seed, path); draws fill it in
    (step, component) order, so any prefix is reproducible on its own.
    """

    seed: int
    dt: float
    d: int

    def _generator(self, path_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(int(path_index),))
        return np.random.Generator(np.random.Philox(seq))

    def increments(self, path_index: int, n_steps: int) -> np.ndarray:
        return math.sqrt(self.dt) * self._generator(path_index).standard_normal((n_steps, self.d))

    def draw(self, path_index: int, component: int, step: int) -> float:
        return float(self.increments(path_index, step + 1)[step, component])

    def block(self, path_indices: Sequence[int], n_steps: int) -> np.ndarray:
        out = np.empty((len(path_indices), n_steps, self.d))
        for row, p in enumerate(path_indices):
            out[row] = self.increments(p, n_steps)
        return out


def step(x, dB, model: CoefficientModel, config: SimConfig) -> np.ndarray:
    """
    One full-truncation Euler step for a state (d,) or a batch (n, d).
    Zero coordinates stay exactly zero; coordinates crossing to <= 0 are
    absorbed at 0. Non-finite coordinates are returned as-is for the caller
    to flag as an explosion.
    """
    x = np.asarray(x, dtype=float)
    dB = np.asarray(dB, dtype=float)
    trapped = x == 0.0
    with np.errstate(all="ignore"):
        f = model._f(x)
        diffusion = np.sqrt(np.maximum(f, 0.0) * np.maximum(x, 0.0)) * dB
        new = x + model.alpha_array * x * config.dt + diffusion
    new = np.where(trapped | (new <= 0.0), 0.0, new)
    return new


@dataclass
class Trajectory:
    """One recorded path. trapped_at / exploded_at are simulation-step indices."""

    times: np.ndarray
    states: np.ndarray
    trapped_at: List[Optional[int]]
    exploded_at: Optional[int]
    record_steps: np.ndarray
    dt: float

    @property
    def d(self) -> int:
        return self.states.shape[1]


@dataclass
class TrajectoryBatch:
    times: np.ndarray
    states: np.ndarray          # (n, m, d)
    trapped_at: np.ndarray      # (n, d), -1 when never trapped
    exploded_at: np.ndarray     # (n,), -1 when no explosion
    record_steps: np.ndarray
    dt: float
    path_indices: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def path(self, i: int, truncate: bool = True) -> Trajectory:
        stop = self.states.shape[1]
        boom = int(self.exploded_at[i])
        if truncate and boom >= 0:
            stop = int(np.searchsorted(self.record_steps, boom, side="left")) + 1
        trapped = [None if t < 0 else int(t) for t in self.trapped_at[i]]
        return Trajectory(self.times[:stop], self.states[i, :stop], trapped,
                          None if boom < 0 else boom, self.record_steps[:stop], self.dt)


def _run_batch(model: CoefficientModel, starts: Sequence[np.ndarray], config: SimConfig,
               path_indices: Sequence[int]) -> List[TrajectoryBatch]:
    """
    Advance one or more starting states with the same noise block. Paths
    that explode freeze at their last finite state.
    """
    n, d = len(path_indices), model.d
    n_steps = config.n_steps
    record_steps = config.record_steps
    record_at = {int(s): j for j, s in enumerate(record_steps)}
    noise = NoiseStream(config.seed, config.dt, d).block(path_indices, n_steps)

    xs, trapped_at, exploded_at, alive, recorded = [], [], [], [], []
    for a in starts:
        x = np.tile(a, (n, 1))
        xs.append(x)
        trapped_at.append(np.where(x == 0.0, 0, -1).astype(np.int64))
        exploded_at.append(np.full(n, -1, dtype=np.int64))
        alive.append(np.ones(n, dtype=bool))
        states = np.empty((n, len(record_steps), d))
        states[:, 0] = x
        recorded.append(states)

    for k in range(n_steps):
        dB = noise[:, k, :]
        for s in range(len(starts)):
            x = xs[s]
            new = step(x, dB, model, config)
            finite = np.all(np.isfinite(new), axis=1)
            with np.errstate(invalid="ignore", over="ignore"):
                big = np.linalg.norm(np.where(finite[:, None], new, 0.0), axis=1) >= config.M
            boom = alive[s] & (~finite | big)
            new = np.where(finite[:, None], new, x)
            new = np.where(alive[s][:, None], new, x)
            exploded_at[s][boom] = k + 1
            alive[s] &= ~boom
            hit = (new == 0.0) & (trapped_at[s] < 0)
            trapped_at[s][hit] = k + 1
            xs[s] = new
            j = record_at.get(k + 1)
            if j is not None:
                recorded[s][:, j] = new

    times = record_steps * config.dt
    idx = np.asarray(path_indices, dtype=np.int64)
    return [TrajectoryBatch(times, recorded[s], trapped_at[s], exploded_at[s], record_steps, config.dt, idx)
            for s in range(len(starts))]


def batch_size_for(config: SimConfig, d: int, copies: int = 1) -> int:
    """
    Paths per batch so one batch's noise and records fit in BATCH_BYTES.
    Depends on the config only, never on the host, so batch boundaries are
    the same on every machine.
    """
    per_path = 8 * d * (config.n_steps + copies * len(config.record_steps))
    return int(max(1, min(config.n_paths, BATCH_BYTES // max(1, per_path))))


def map_paths(fn: Callable[[np.ndarray], T], n_paths: int, batch_size: int,
              workers: Optional[int] = None, first_path: int = 0) -> List[T]:
    """
    Split [first_path, first_path + n_paths) into batches and map fn over them
    on a thread pool. Results come back in batch order.
    """
    bounds = range(first_path, first_path + n_paths, batch_size)
    chunks = [np.arange(lo, min(lo + batch_size, first_path + n_paths)) for lo in bounds]
    workers = workers or CPU_CORES
    if workers == 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, chunks))


def simulate_batch(model: CoefficientModel, a, config: SimConfig, path_indices: Sequence[int]) -> TrajectoryBatch:
    a = np.asarray(a, dtype=float)
    config.check_start(a)
    return _run_batch(model, [a], config, path_indices)[0]


def simulate_path(model: CoefficientModel, a, config: SimConfig, path_index: int = 0) -> Trajectory:
    return simulate_batch(model, a, config, [path_index]).path(0)


@dataclass
class CoupledBatch:
    """Two batches driven by identical noise, plus the derived difference series."""

    model: CoefficientModel
    x: TrajectoryBatch
    y: TrajectoryBatch

    @property
    def times(self) -> np.ndarray:
        return self.x.times

    @property
    def xi(self) -> np.ndarray:
        return (self.x.states - self.y.states) ** 2

    @property
    def zeta(self) -> np.ndarray:
        return np.sum(self.xi, axis=-1)

    @property
    def eta(self) -> np.ndarray:
        with np.errstate(all="ignore"):
            fx = self.model._f(self.x.states)
            fy = self.model._f(self.y.states)
            return np.sqrt(np.maximum(fx, 0.0) * self.x.states) - np.sqrt(np.maximum(fy, 0.0) * self.y.states)

    def run(self, i: int) -> "CoupledRun":
        return CoupledRun(self.model, self.x.path(i, truncate=False), self.y.path(i, truncate=False))


@dataclass
class CoupledRun:
    model: CoefficientModel
    x: Trajectory
    y: Trajectory
    zeta: np.ndarray = field(init=False)
    xi: np.ndarray = field(init=False)
    eta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.xi = (self.x.states - self.y.states) ** 2
        self.zeta = np.sum(self.xi, axis=-1)
        with np.errstate(all="ignore"):
            fx = self.model._f(self.x.states)
            fy = self.model._f(self.y.states)
            self.eta = np.sqrt(np.maximum(fx, 0.0) * self.x.states) - np.sqrt(np.maximum(fy, 0.0) * self.y.states)

    @property
    def times(self) -> np.ndarray:
        return self.x.times

    @property
    def dt(self) -> float:
        return self.x.dt


def simulate_coupled_batch(model: CoefficientModel, aX, aY, config: SimConfig,
                           path_indices: Sequence[int]) -> CoupledBatch:
    aX = np.asarray(aX, dtype=float)
    aY = np.asarray(aY, dtype=float)
    config.check_start(aX)
    config.check_start(aY)
    bx, by = _run_batch(model, [aX, aY], config, path_indices)
    return CoupledBatch(model, bx, by)


def simulate_coupled(model: CoefficientModel, aX, aY, config: SimConfig, path_index: int = 0) -> CoupledRun:
    return simulate_coupled_batch(model, aX, aY, config, [path_index]).run(0)


def detect_explosion(traj: Trajectory, M: float) -> Optional[float]:
    """First grid time with |X| >= M, or the engine's own explosion flag if earlier."""
    norms = np.linalg.norm(traj.states, axis=1)
    hits = np.flatnonzero(norms >= M)
    found = float(traj.times[hits[0]]) if hits.size else None
    if traj.exploded_at is not None:
        flagged = traj.exploded_at * traj.dt
        found = flagged if found is None else min(found, flagged)
    return found
