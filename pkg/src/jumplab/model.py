"""Core value types: sampled paths, jump records, test reports, mark laws."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from jumplab.errors import InvalidArgument


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LogPricePath:
    """Log-prices on a regular grid ``t_i = i * delta``, ``i = 0..n``.

    ``horizon`` defaults to ``n * delta``. ``dropped`` counts trailing
    observations discarded by :func:`aggregate_last_tick`.
    """

    values: np.ndarray
    delta: float
    horizon: float | None = None
    dropped: int = 0

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1:
            raise InvalidArgument("values must be one-dimensional")
        n = values.size - 1
        if n < 2:
            raise InvalidArgument(f"need at least 3 observations, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("values must be finite")
        delta = float(self.delta)
        if not delta > 0:
            raise InvalidArgument(f"delta must be positive, got {delta}")
        horizon = n * delta if self.horizon is None else float(self.horizon)
        if not math.isclose(n * delta, horizon, rel_tol=1e-9):
            raise InvalidArgument(f"n*delta = {n * delta} does not match horizon {horizon}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "horizon", horizon)

    @property
    def n(self) -> int:
        return self.values.size - 1

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.delta

    def __eq__(self, other):
        # grid spacings built by different multiplication orders may differ in the last bit
        if type(other) is not type(self):
            return NotImplemented
        return (
            math.isclose(self.delta, other.delta, rel_tol=1e-12)
            and math.isclose(self.horizon, other.horizon, rel_tol=1e-12)
            and self.dropped == other.dropped
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


class ObservedPath(LogPricePath):
    """Noisy observations ``Y_i = X_i + eps_i`` on the same kind of grid."""


def increments(path: LogPricePath) -> np.ndarray:
    """Return ``values[i] - values[i-1]`` for ``i = 1..n``."""
    return np.diff(path.values)


def aggregate_last_tick(path: LogPricePath, factor: int) -> LogPricePath:
    """Keep every ``factor``-th observation starting at index 0.

    When ``factor`` does not divide ``n`` the trailing observations are
    dropped; the count accumulates in ``dropped``.
    """
    if int(factor) != factor or factor <= 0:
        raise InvalidArgument(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return path
    m = path.n // factor
    if m < 2:
        raise InvalidArgument(f"factor {factor} leaves fewer than 3 observations")
    kept = path.values[: m * factor + 1 : factor]
    dropped = path.n - m * factor
    delta = path.delta * factor
    return type(path)(kept, delta, m * delta, dropped=path.dropped + dropped)


class Method(str, enum.Enum):
    AJ = "AJ"
    LM = "LM"
    CC = "CC"
    PA = "PA"
    LA = "LA"
    CCN = "CCN"


@dataclass(frozen=True)
class JumpTestReport:
    method: Method
    statistic: float
    normalized: float
    pvalue: float
    tuning: Mapping[str, float] = field(default_factory=dict)
    location: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0.0 <= self.pvalue <= 1.0:
            raise InvalidArgument(f"p-value {self.pvalue} outside [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "statistic": float(self.statistic),
            "normalized": float(self.normalized),
            "pvalue": float(self.pvalue),
            "tuning": {k: float(v) for k, v in self.tuning.items()},
        }
        if self.location is not None:
            out["location"] = int(self.location)
        return out


@dataclass(frozen=True)
class JumpRecord:
    time: float
    size: float

    def __post_init__(self):
        if not self.time > 0:
            raise InvalidArgument(f"jump time must be positive, got {self.time}")
        if self.size == 0:
            raise InvalidArgument("jump size must be nonzero")


def check_jump_sequence(jumps: Sequence[JumpRecord]) -> None:
    times = [j.time for j in jumps]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidArgument("jump times must be strictly increasing")


@dataclass(frozen=True)
class MarkLaw:
    """Distribution of jump marks.

    ``kind`` is ``"normal"`` (``params = (variance,)``), ``"point"``
    (``params = (value,)``) or ``"uniform"`` (``params = (low, high)``).
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        expected = {"normal": 1, "point": 1, "uniform": 2}
        if self.kind not in expected:
            raise InvalidArgument(f"unknown mark law {self.kind!r}")
        if len(self.params) != expected[self.kind]:
            raise InvalidArgument(f"{self.kind} mark law takes {expected[self.kind]} parameter(s)")
        if self.kind == "normal" and self.params[0] < 0:
            raise InvalidArgument("normal mark variance must be non-negative")
        if self.kind == "uniform" and not self.params[0] < self.params[1]:
            raise InvalidArgument("uniform mark law needs low < high")

    @classmethod
    def normal(cls, variance: float) -> "MarkLaw":
        return cls("normal", (variance,))

    @classmethod
    def point(cls, value: float) -> "MarkLaw":
        return cls("point", (value,))

    @classmethod
    def uniform(cls, low: float, high: float) -> "MarkLaw":
        return cls("uniform", (low, high))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "normal":
            return math.sqrt(self.params[0]) * rng.standard_normal(size)
        if self.kind == "point":
            return np.full(size, self.params[0])
        return rng.uniform(self.params[0], self.params[1], size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MarkLaw":
        return cls(d["kind"], tuple(d["params"]))
