"""Finite-sample calibration of the max-type tests by parametric bootstrap.

The noiseless LM test is calibrated pathwise: a Gaussian no-jump surrogate
with the path's own local bipower variances is resampled and the statistic
recomputed. The noisy local-average test uses a two-stage (double) bootstrap
that calibrates the bootstrap p-value itself.

Resample ``b`` always draws from ``substream(seed, purpose, b)``, so results
do not depend on chunking and raising ``b2`` never moves stage-1 draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from jumplab.errors import DegenerateVariance, InvalidArgument
from jumplab.frictionless import LmConfig, _local_bipower, _lm_max
from jumplab.model import LogPricePath, ObservedPath, increments
from jumplab.noise import LaConfig, _la_max, _noise_variance, _tsrsv
from jumplab.rng import substream

# rows of resampled paths held in memory at once
CHUNK_ROWS = 64


@dataclass(frozen=True)
class BootstrapConfig:
    """Resample counts, nominal level and seed.

    ``b2`` may be as small as 1; values below 19 make the stage-2 quantile
    coarse but the decision stays well defined.
    """

    b1: int = 199
    b2: int = 99
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if int(self.b1) != self.b1 or self.b1 < 19:
            raise InvalidArgument(f"b1 must be an integer >= 19, got {self.b1}")
        if int(self.b2) != self.b2 or self.b2 < 1:
            raise InvalidArgument(f"b2 must be a positive integer, got {self.b2}")
        if not 0 < self.alpha < 1:
            raise InvalidArgument(f"alpha must lie in (0, 1), got {self.alpha}")


def add_one_pvalue(exceed: int, b: int) -> float:
    return (1.0 + exceed) / (b + 1.0)


def lm_surrogate_variance(r: np.ndarray, K: int, demean: bool = True) -> np.ndarray:
    """Per-increment variances from the local bipower series.

    The first ``K - 1`` increments lack a full window and reuse the first
    available estimate.
    """
    if demean:
        r = r - r.mean()
    V = _local_bipower(r, K)
    out = np.empty(r.size)
    out[K - 1 :] = V
    out[: K - 1] = V[0]
    if not np.all(out > 0):
        raise DegenerateVariance("fitted local bipower variance is zero")
    return out


def lm_bootstrap_pvalue(path: LogPricePath, cfg_lm: LmConfig = LmConfig(), cfg_bs: BootstrapConfig = BootstrapConfig()) -> float:
    """Pathwise parametric bootstrap p-value ``(1 + #{T* >= T}) / (b1 + 1)``."""
    r = increments(path)
    K = cfg_lm.resolve_window(path.n, path.delta)
    t_obs = float(_lm_max(r, K, cfg_lm.demean)[0])
    sd = np.sqrt(lm_surrogate_variance(r, K, cfg_lm.demean))
    exceed = 0
    for start in range(0, cfg_bs.b1, CHUNK_ROWS):
        rows = range(start, min(start + CHUNK_ROWS, cfg_bs.b1))
        z = np.stack([substream(cfg_bs.seed, "lm-bootstrap", b).standard_normal(r.size) for b in rows])
        t_star = _lm_max(z * sd, K, cfg_lm.demean)[0]
        exceed += int(np.count_nonzero(t_star >= t_obs))
    return add_one_pvalue(exceed, cfg_bs.b1)


@dataclass(frozen=True, eq=False)
class DoubleBootstrapResult:
    """Outcome of the two-stage calibration.

    Both stages use the add-one convention: ``p_star = (1 + #{T* >= T}) /
    (b1 + 1)`` and ``p_double[b] = (1 + #{T** >= T*_b}) / (b2 + 1)``.
    ``reject`` holds iff ``p_star`` is below ``threshold``, the empirical
    ``alpha``-quantile of ``p_double``. ``p_star_plain`` is ``#{T* >= T} / b1``.
    ``adjusted_pvalue`` is the share of ``p_double`` at or below ``p_star``;
    it is below ``alpha`` exactly when ``reject`` holds.
    ``stage2_exceed[b, j]`` flags inner resample ``j`` of outer resample ``b``
    reaching the outer statistic; its first ``m`` columns reproduce a run
    with ``b2 = m``.
    """

    reject: bool
    p_star: float
    threshold: float
    statistic: float
    p_star_plain: float
    p_double: np.ndarray
    adjusted_pvalue: float
    alpha: float
    stage2_exceed: np.ndarray | None = None

    def decision(self, alpha: float, b2: int | None = None) -> bool:
        """Decision at ``alpha``, optionally using only the first ``b2`` inner resamples."""
        p2 = self.p_double
        if b2 is not None:
            if self.stage2_exceed is None or not 1 <= b2 <= self.stage2_exceed.shape[1]:
                raise InvalidArgument(f"b2 prefix {b2} unavailable")
            p2 = add_one_pvalue(self.stage2_exceed[:, :b2].sum(axis=1), b2)
        return bool(self.p_star < empirical_quantile(p2, alpha))


def empirical_quantile(x: np.ndarray, alpha: float) -> float:
    """Smallest ``v`` in ``x`` whose empirical cdf reaches ``alpha``."""
    return float(np.quantile(np.asarray(x, dtype=float), alpha, method="inverted_cdf"))


def _window_index(n: int, M: int, count: int) -> np.ndarray:
    """Grid window of each increment ``1..n``; increments past the grid use the last window."""
    return np.minimum(np.arange(n) // (2 * M), count - 1)


def _noisy_surrogate(
    seed: int, purpose: tuple, rows: range, n: int, delta: float, sd_incr: np.ndarray, omega: np.ndarray
) -> np.ndarray:
    """No-jump Gaussian paths plus Gaussian noise; one substream per row."""
    out = np.empty((len(rows), n + 1))
    for j, b in enumerate(rows):
        z = substream(seed, *purpose, b).standard_normal(2 * n + 1)
        x = np.empty(n + 1)
        x[0] = 0.0
        np.cumsum(z[:n] * sd_incr[j], out=x[1:])
        out[j] = x + math.sqrt(omega[j]) * z[n:]
    return out


def _nuisances(y: np.ndarray, delta: float, cfg: LaConfig, grid: np.ndarray):
    return _noise_variance(y), _tsrsv(y, delta, cfg, grid)


def double_bootstrap_decision(
    Y: ObservedPath, cfg_la: LaConfig, cfg_bs: BootstrapConfig = BootstrapConfig()
) -> DoubleBootstrapResult:
    """Two-stage bootstrap decision for the local-average maximum.

    Stage 1 fits a piecewise-constant spot variance (two-scale estimate on
    the local-average grid) and the noise variance, draws ``b1`` surrogate
    paths, re-estimates both nuisances on each and recomputes the statistic.
    Stage 2 repeats the procedure from each stage-1 fit with ``b2`` paths.
    """
    n, delta, M = Y.n, Y.delta, cfg_la.M_n
    grid = cfg_la.grid(n)
    win = _window_index(n, M, grid.size)
    y = Y.values
    omega, sig = _nuisances(y, delta, cfg_la, grid)
    t_obs = float(_la_max(y, delta, cfg_la, omega, sig)[0])

    b1, b2 = cfg_bs.b1, cfg_bs.b2
    t1 = np.empty(b1)
    exceed2 = np.empty((b1, b2), dtype=bool)
    for start in range(0, b1, CHUNK_ROWS):
        rows = range(start, min(start + CHUNK_ROWS, b1))
        sd = np.broadcast_to(np.sqrt(sig[win] * delta), (len(rows), n))
        paths = _noisy_surrogate(cfg_bs.seed, ("stage1",), rows, n, delta, sd, np.full(len(rows), omega))
        om1, sig1 = _nuisances(paths, delta, cfg_la, grid)
        t_chunk = _la_max(paths, delta, cfg_la, om1, sig1)[0]
        t1[start : start + len(rows)] = t_chunk
        for j, b in enumerate(rows):
            sd2 = np.broadcast_to(np.sqrt(sig1[j][win] * delta), (b2, n))
            inner = _noisy_surrogate(cfg_bs.seed, ("stage2", b), range(b2), n, delta, sd2, np.full(b2, om1[j]))
            om2, sig2 = _nuisances(inner, delta, cfg_la, grid)
            t2 = _la_max(inner, delta, cfg_la, om2, sig2)[0]
            exceed2[b] = t2 >= t_chunk[j]

    # add-one at both stages keeps the threshold above zero when many inner p-values tie at zero
    p2 = add_one_pvalue(exceed2.sum(axis=1), b2)
    exceed = int(np.count_nonzero(t1 >= t_obs))
    p_star = add_one_pvalue(exceed, b1)
    threshold = empirical_quantile(p2, cfg_bs.alpha)
    return DoubleBootstrapResult(
        reject=bool(p_star < threshold),
        p_star=p_star,
        threshold=threshold,
        statistic=t_obs,
        p_star_plain=exceed / b1,
        p_double=p2,
        adjusted_pvalue=float(np.count_nonzero(p2 <= p_star) / b1),
        alpha=cfg_bs.alpha,
        stage2_exceed=exceed2,
    )
