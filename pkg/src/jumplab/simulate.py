"""Heston paths with optional jumps and additive observation noise.

Every day draws from substreams keyed by ``(day_seed, purpose)``, so
changing the jump or noise specification never perturbs the Brownian draws
(common random numbers across alternatives).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from jumplab.errors import InvalidArgument
from jumplab.model import JumpRecord, LogPricePath, MarkLaw, ObservedPath
from jumplab.rng import substream


@dataclass(frozen=True)
class HestonParams:
    v0: float = 0.16
    kappa: float = 5.0
    beta_bar: float = 0.16
    gamma: float = 0.5
    rho: float = -0.5

    def __post_init__(self):
        if not (self.v0 > 0 and self.beta_bar > 0):
            raise InvalidArgument("v0 and beta_bar must be positive")
        if self.kappa < 0 or self.gamma < 0:
            raise InvalidArgument("kappa and gamma must be non-negative")
        if not -1 <= self.rho <= 1:
            raise InvalidArgument(f"rho must lie in [-1, 1], got {self.rho}")


class JumpKind(str, enum.Enum):
    NONE = "none"
    DENSE = "dense"
    SPARSE = "sparse"


@dataclass(frozen=True)
class JumpSpec:
    """``DENSE``: ``Poisson(intensity * sqrt(delta))`` marks per interval, scaled by
    ``sqrt(V delta)``. ``SPARSE``: compound Poisson with rate ``intensity`` per unit time.
    """

    kind: JumpKind = JumpKind.NONE
    intensity: float = 0.0
    mark: MarkLaw | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", JumpKind(self.kind))
        if self.kind is not JumpKind.NONE:
            if not self.intensity > 0:
                raise InvalidArgument("jump intensity must be positive")
            if self.mark is None:
                raise InvalidArgument("jump spec needs a mark law")

    @classmethod
    def none(cls) -> "JumpSpec":
        return cls()

    @classmethod
    def dense(cls, theta: float, mark: MarkLaw) -> "JumpSpec":
        return cls(JumpKind.DENSE, theta, mark)

    @classmethod
    def sparse(cls, lam: float, mark: MarkLaw) -> "JumpSpec":
        return cls(JumpKind.SPARSE, lam, mark)


class NoiseKind(str, enum.Enum):
    NONE = "none"
    GAUSSIAN = "gaussian"
    STUDENT_T8 = "student_t8"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = NoiseKind.NONE
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.q < 0:
            raise InvalidArgument("noise scale q must be non-negative")

    @property
    def omega_sq(self) -> float:
        return 0.0 if self.kind is NoiseKind.NONE else self.q**2

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind is NoiseKind.NONE:
            return np.zeros(size)
        if self.kind is NoiseKind.GAUSSIAN:
            return self.q * rng.standard_normal(size)
        # t_8 has variance 8/6; rescale to variance q^2
        return self.q * math.sqrt(3 / 4) * rng.standard_t(8, size)


@dataclass(frozen=True, eq=False)
class SimulatedDay:
    latent: LogPricePath
    observed: ObservedPath
    variance_path: np.ndarray
    jumps: tuple[JumpRecord, ...]
    seed: int


def simulate_heston_batch(
    params: HestonParams, n: int, delta: float, seeds: Sequence[int], x0: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Euler scheme with full truncation for several seeds at once.

    Returns ``(X, V)`` of shape ``(len(seeds), n + 1)``; row ``r`` equals the
    single-path output for ``seeds[r]``. ``V`` is the raw Euler variance,
    whose positive part drives both equations.
    """
    if n < 2:
        raise InvalidArgument(f"need n >= 2 steps, got {n}")
    R = len(seeds)
    zb = np.empty((R, n))
    zw = np.empty((R, n))
    for r, seed in enumerate(seeds):
        z = substream(seed, "brownian").standard_normal((2, n))
        zb[r] = z[0]
        zw[r] = params.rho * z[0] + math.sqrt(1.0 - params.rho**2) * z[1]
    sd = math.sqrt(delta)
    V = np.empty((R, n + 1))
    X = np.empty((R, n + 1))
    v = np.full(R, float(params.v0))
    x = np.full(R, float(x0))
    V[:, 0] = v
    X[:, 0] = x
    for i in range(n):
        vp = np.maximum(v, 0.0)
        sv = np.sqrt(vp) * sd
        x = x + (-0.5 * delta) * vp + sv * zw[:, i]
        v = v + params.kappa * (params.beta_bar - vp) * delta + params.gamma * sv * zb[:, i]
        X[:, i + 1] = x
        V[:, i + 1] = v
    return X, V


def simulate_heston(params: HestonParams, n: int, delta: float, seed: int, x0: float = 0.0) -> tuple[LogPricePath, np.ndarray]:
    X, V = simulate_heston_batch(params, n, delta, [seed], x0)
    return LogPricePath(X[0], delta), V[0]


def _dense_jumps(n: int, delta: float, V: np.ndarray, spec: JumpSpec, rng) -> np.ndarray:
    counts = rng.poisson(spec.intensity * math.sqrt(delta), n)
    marks = spec.mark.sample(rng, int(counts.sum()))
    totals = np.bincount(np.repeat(np.arange(n), counts), weights=marks, minlength=n)
    return np.sqrt(np.maximum(V[:n], 0.0) * delta) * totals


def attach_jumps(
    X: LogPricePath, V: np.ndarray, spec: JumpSpec, seed: int
) -> tuple[LogPricePath, tuple[JumpRecord, ...]]:
    """Add jumps to ``X``; returns the new path and the jump records.

    Dense marks enter at the end of each interval. A sparse jump at time
    ``tau`` belongs to the interval ``(t_{i-1}, t_i]`` containing it.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != X.values.shape:
        raise InvalidArgument("variance path must be aligned with X")
    if spec.kind is JumpKind.NONE:
        return X, ()
    rng = substream(seed, "jumps", spec.kind.value)
    n, delta = X.n, X.delta
    shift = np.zeros(n + 1)
    if spec.kind is JumpKind.DENSE:
        dj = _dense_jumps(n, delta, V, spec, rng)
        shift[1:] = np.cumsum(dj)
        idx = np.flatnonzero(dj)
        records = tuple(JumpRecord((i + 1) * delta, float(dj[i])) for i in idx)
    else:
        count = rng.poisson(spec.intensity * X.horizon)
        times = np.sort(rng.uniform(0.0, X.horizon, count))
        sizes = spec.mark.sample(rng, count)
        keep = (times > 0) & (sizes != 0)
        times, sizes = times[keep], sizes[keep]
        cells = np.clip(np.ceil(times / delta).astype(int), 1, n)
        step = np.bincount(cells, weights=sizes, minlength=n + 1)
        shift = np.cumsum(step)
        records = tuple(JumpRecord(float(t), float(s)) for t, s in zip(times, sizes))
    return type(X)(X.values + shift, delta, X.horizon, X.dropped), records


def attach_noise(X: LogPricePath, spec: NoiseSpec, seed: int) -> ObservedPath:
    """``Y_i = X_i + eps_i`` with i.i.d. noise from ``spec``."""
    if spec.kind is NoiseKind.NONE:
        return ObservedPath(X.values, X.delta, X.horizon, X.dropped)
    eps = spec.sample(substream(seed, "noise", spec.kind.value), X.n + 1)
    return ObservedPath(X.values + eps, X.delta, X.horizon, X.dropped)


def simulate_day(
    params: HestonParams,
    n: int,
    delta: float,
    seed: int,
    jumps: JumpSpec = JumpSpec(),
    noise: NoiseSpec = NoiseSpec(),
) -> SimulatedDay:
    X, V = simulate_heston(params, n, delta, seed)
    latent, records = attach_jumps(X, V, jumps, seed)
    observed = attach_noise(latent, noise, seed)
    return SimulatedDay(latent, observed, V, records, seed)


def write_day_csv(day: SimulatedDay, path: str | Path) -> None:
    """Dump one simulated day as ``index,time,latent,observed,variance``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "time", "latent", "observed", "variance"])
        times = day.latent.times()
        for i in range(day.latent.n + 1):
            w.writerow([i, repr(float(times[i])), repr(float(day.latent.values[i])),
                        repr(float(day.observed.values[i])), repr(float(day.variance_path[i]))])
