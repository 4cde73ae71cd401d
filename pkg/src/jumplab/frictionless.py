"""Jump tests for noiseless high-frequency paths.

The sum test compares power variations of coarse blocks and single
increments; the max test standardizes each increment by a local bipower
variance and calibrates the largest one against the Gumbel law. The two
p-values are merged with a Cauchy combination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from jumplab.errors import (
    DegeneratePath,
    DegenerateVariance,
    InsufficientData,
    InvalidArgument,
    NumericFailure,
)
from jumplab.model import (
    JumpRecord,
    JumpTestReport,
    LogPricePath,
    MarkLaw,
    Method,
    check_jump_sequence,
    increments,
)
from jumplab.rng import substream

PVALUE_CLAMP = 1e-15
KERNEL_CHUNK = 1_000_000


@dataclass(frozen=True)
class AjConfig:
    p: float = 4.0
    k: int = 2
    kernel_mc_paths: int = 10_000_000
    kernel_mc_seed: int = 20090101

    def __post_init__(self):
        if not self.p > 3:
            raise InvalidArgument(f"power p must exceed 3, got {self.p}")
        if int(self.k) != self.k or self.k < 2:
            raise InvalidArgument(f"block size k must be an integer >= 2, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "p", float(self.p))


@dataclass(frozen=True)
class LmConfig:
    """Tuning of the max test.

    The window is ``window`` if given, else ``floor(delta ** -rho)`` if
    ``rho`` is given, else ``ceil(n ** 0.6)``.
    """

    window: int | None = None
    demean: bool = True
    rho: float | None = None

    def __post_init__(self):
        if self.window is not None and (int(self.window) != self.window or self.window < 2):
            raise InvalidArgument(f"window must be an integer >= 2, got {self.window}")
        if self.rho is not None and not 0.5 < self.rho < 1:
            raise InvalidArgument(f"rho must lie in (1/2, 1), got {self.rho}")

    def resolve_window(self, n: int, delta: float) -> int:
        if self.window is not None:
            K = int(self.window)
        elif self.rho is not None:
            K = int(math.floor(delta ** (-self.rho)))
        else:
            K = int(math.ceil(n**0.6))
        if K < 2:
            raise InvalidArgument(f"window {K} < 2")
        if n < 2 * K:
            raise InsufficientData(f"max test needs n >= 2K, got n={n}, K={K}")
        return K


@dataclass(frozen=True)
class KernelMoments:
    varsigma_sq: float
    d_pk: float | None
    mc_paths: int
    mc_seed: int
    standard_error: float
    d_pk_standard_error: float | None = None


def gaussian_abs_moment(r: float) -> float:
    """``E|N|^r`` for a standard normal ``N``."""
    if r < 0:
        raise InvalidArgument(f"moment order must be non-negative, got {r}")
    return 2.0 ** (r / 2) * math.gamma((r + 1) / 2) / math.sqrt(math.pi)


def _power_variation(r: np.ndarray, p: float) -> np.ndarray:
    return np.sum(np.abs(r) ** p, axis=-1)


def _block_power_variation(r: np.ndarray, p: float, k: int) -> np.ndarray:
    m = r.shape[-1] // k
    blocks = r[..., : m * k].reshape(r.shape[:-1] + (m, k)).sum(axis=-1)
    return np.sum(np.abs(blocks) ** p, axis=-1)


def power_variation(path: LogPricePath, p: float) -> float:
    if not p > 0:
        raise InvalidArgument(f"power must be positive, got {p}")
    return float(_power_variation(increments(path), p))


def block_power_variation(path: LogPricePath, p: float, k: int) -> float:
    """Power variation of non-overlapping ``k``-sums; a partial last block is discarded."""
    if int(k) != k or k < 2:
        raise InvalidArgument(f"block size must be an integer >= 2, got {k}")
    if not p > 0:
        raise InvalidArgument(f"power must be positive, got {p}")
    if path.n < k:
        raise InsufficientData(f"n={path.n} < k={k}")
    return float(_block_power_variation(increments(path), p, int(k)))


def block_kernel_u(x: Sequence[float], p: float, k: int) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (k,):
        raise InvalidArgument(f"expected {k} values, got shape {x.shape}")
    return float(abs(x.sum()) ** p - k ** (p / 2 - 1) * np.sum(np.abs(x) ** p))


def _chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def kernel_moments(cfg: AjConfig, mark: MarkLaw | None = None) -> KernelMoments:
    """Monte Carlo variance of the block kernel and, given a mark law, the dense shift constant.

    The draw budget is split into fixed chunks, each with its own substream,
    so the result does not depend on how the chunks are scheduled. Results
    are cached per ``(p, k, budget, seed, mark)``.
    """
    return _kernel_moments(cfg.p, cfg.k, int(cfg.kernel_mc_paths), int(cfg.kernel_mc_seed), mark)


@lru_cache(maxsize=64)
def _kernel_moments(p: float, k: int, budget: int, seed: int, mark: MarkLaw | None) -> KernelMoments:
    if budget < 100_000:
        raise InvalidArgument(f"Monte Carlo budget must be at least 1e5, got {budget}")
    ck = k ** (p / 2 - 1)
    pivot = None
    su = np.zeros(4)
    sd = np.zeros(2)
    for c, size in enumerate(_chunk_sizes(budget, KERNEL_CHUNK)):
        e = substream(seed, "kernel", c).standard_normal((size, k))
        s = e.sum(axis=1)
        u = np.abs(s) ** p - ck * np.sum(np.abs(e) ** p, axis=1)
        if pivot is None:
            pivot = float(u.mean())
        w = u - pivot
        w2 = w * w
        su += [w.sum(), w2.sum(), (w2 * w).sum(), (w2 * w2).sum()]
        if mark is not None:
            y = mark.sample(substream(seed, "kernel-mark", c), size)
            e1 = e[:, 0]
            d = (
                np.abs(y + s) ** p
                - np.abs(s) ** p
                - ck * (np.abs(y + e1) ** p - np.abs(e1) ** p)
            )
            sd += [d.sum(), (d * d).sum()]
    N = budget
    m1, r2, r3, r4 = su / N
    mu2 = r2 - m1**2
    mu4 = r4 - 4 * m1 * r3 + 6 * m1**2 * r2 - 3 * m1**4
    varsigma_sq = mu2 * N / (N - 1)
    se = math.sqrt(max(mu4 - mu2**2, 0.0) / N)
    d_pk = d_se = None
    if mark is not None:
        d_pk = sd[0] / N
        d_se = math.sqrt(max(sd[1] / N - d_pk**2, 0.0) / N)
    return KernelMoments(float(varsigma_sq), d_pk, N, seed, se, d_se)


def _aj_parts(r: np.ndarray, delta: float, cfg: AjConfig, varsigma_sq: float):
    p, k = cfg.p, cfg.k
    B = _power_variation(r, p)
    Bk = _block_power_variation(r, p, k)
    B2p = _power_variation(r, 2 * p)
    m_p, m_2p = gaussian_abs_moment(p), gaussian_abs_moment(2 * p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = Bk / B
        A_p = delta ** (1 - p / 2) * B / m_p
        A_2p = delta ** (1 - p) * B2p / m_2p
        tau_sq = varsigma_sq / (k * m_p**2) * A_2p / A_p**2
        z = delta ** -0.5 * (ratio - k ** (p / 2 - 1)) / np.sqrt(tau_sq)
    return B, ratio, tau_sq, z


def two_sided_pvalue(z):
    return 2.0 * norm.sf(np.abs(z))


def aj_test(path: LogPricePath, cfg: AjConfig = AjConfig(), moments: KernelMoments | None = None) -> JumpTestReport:
    """Coarse-to-fine power-variation ratio test with a studentized normal limit."""
    if path.n < cfg.k:
        raise InsufficientData(f"n={path.n} < k={cfg.k}")
    if moments is None:
        moments = kernel_moments(cfg)
    B, ratio, tau_sq, z = _aj_parts(increments(path), path.delta, cfg, moments.varsigma_sq)
    if B == 0:
        raise DegeneratePath("power variation of the path is zero")
    if not tau_sq > 0:
        raise DegenerateVariance("estimated AJ variance is zero")
    return JumpTestReport(
        Method.AJ,
        statistic=float(ratio),
        normalized=float(z),
        pvalue=float(two_sided_pvalue(z)),
        tuning={"p": cfg.p, "k": cfg.k, "n": path.n, "m_n": path.n // cfg.k,
                "varsigma_sq": moments.varsigma_sq},
    )


def lm_normalizers(n: int) -> tuple[float, float]:
    """Centering and scaling constants ``(C_n, a_n)`` of the Gumbel limit."""
    L = math.log(n)
    root = math.sqrt(2 * L)
    return root - (math.log(math.pi) + math.log(L)) / (2 * root), 1.0 / root


def gumbel_pvalue(xi):
    """Upper-tail p-value ``1 - exp(-exp(-xi))``."""
    return -np.expm1(-np.exp(-np.asarray(xi, dtype=float)))


def _local_bipower(r: np.ndarray, K: int) -> np.ndarray:
    """Local bipower variances for ``i = K..n`` along the last axis."""
    prod = np.abs(r[..., 1:]) * np.abs(r[..., :-1])
    cs = np.cumsum(prod, axis=-1)
    cs = np.concatenate([np.zeros(cs.shape[:-1] + (1,)), cs], axis=-1)
    n = r.shape[-1]
    window = cs[..., K - 1 : n] - cs[..., 0 : n - K + 1]
    return math.pi / (2 * (K - 1)) * window


def _lm_max(r: np.ndarray, K: int, demean: bool, spot_variance: np.ndarray | None = None):
    """Return ``(M_n, argmax index i)`` along the last axis of ``r``."""
    if demean:
        r = r - r.mean(axis=-1, keepdims=True)
    V = _local_bipower(r, K) if spot_variance is None else np.asarray(spot_variance)[..., K - 1 :]
    if np.any(V <= 0):
        raise DegenerateVariance("a local bipower variance is zero")
    L = np.abs(r[..., K - 1 :]) / np.sqrt(V)
    idx = np.argmax(L, axis=-1)
    return np.take_along_axis(L, idx[..., None], axis=-1)[..., 0], idx + K


def lm_test(path: LogPricePath, cfg: LmConfig = LmConfig(), spot_variance=None) -> JumpTestReport:
    """Maximum of locally standardized increments against the Gumbel law.

    ``spot_variance`` (per-increment variances, length ``n``) replaces the
    local bipower estimate when the true local variance is known.
    """
    K = cfg.resolve_window(path.n, path.delta)
    r = increments(path)
    if spot_variance is not None:
        spot_variance = np.asarray(spot_variance, dtype=float)
        if spot_variance.shape != r.shape:
            raise InvalidArgument("spot_variance must have one entry per increment")
    M, loc = _lm_max(r, K, cfg.demean, spot_variance)
    C, a = lm_normalizers(path.n)
    xi = (M - C) / a
    return JumpTestReport(
        Method.LM,
        statistic=float(M),
        normalized=float(xi),
        pvalue=float(gumbel_pvalue(xi)),
        tuning={"K_n": K, "n": path.n, "C_n": C, "a_n": a, "demean": float(cfg.demean)},
        location=int(loc),
    )


def _cauchy_transform(p: np.ndarray) -> np.ndarray:
    """``tan(pi (1/2 - p))`` evaluated without cancellation near 0 and 1."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            p < 0.25,
            1.0 / np.tan(np.pi * p),
            np.where(p > 0.75, -1.0 / np.tan(np.pi * (1.0 - p)), np.tan(np.pi * (0.5 - p))),
        )


def _cauchy_upper(t):
    """``1/2 - arctan(t)/pi``, accurate for large positive ``t``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t > 1.0, np.arctan(1.0 / t) / np.pi, 0.5 - np.arctan(t) / np.pi)


def cauchy_combine(pvalues: Sequence[float], weights: Sequence[float] | None = None) -> tuple[float, float]:
    """Cauchy combination of p-values; returns ``(statistic, combined p-value)``.

    Inputs are clamped to ``[1e-15, 1 - 1e-15]``. Equal weights by default.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidArgument("need a non-empty sequence of p-values")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise InvalidArgument("p-values must lie in [0, 1]")
    if weights is None:
        w = np.full(p.size, 1.0 / p.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != p.shape or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise InvalidArgument("weights must be non-negative, one per p-value, summing to 1")
    p = np.clip(p, PVALUE_CLAMP, 1 - PVALUE_CLAMP)
    t = float(np.sum(w * _cauchy_transform(p)))
    return t, float(_cauchy_upper(t))


def cauchy_critical(alpha: float) -> float:
    """Upper ``alpha``-quantile ``cot(pi alpha)`` of the standard Cauchy law."""
    if not 0 < alpha < 1:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")
    return float(_cauchy_transform(alpha))


def cc_test(aj: JumpTestReport, lm: JumpTestReport, lm_pvalue: float | None = None) -> JumpTestReport:
    """Combine an AJ and an LM report.

    ``lm_pvalue`` overrides the LM report's asymptotic p-value, e.g. with a
    bootstrap p-value.
    """
    p_lm = lm.pvalue if lm_pvalue is None else lm_pvalue
    t, p = cauchy_combine([aj.pvalue, p_lm])
    tuning = dict(aj.tuning)
    tuning.update({f"lm_{k}": v for k, v in lm.tuning.items()})
    tuning["p_aj"] = aj.pvalue
    tuning["p_lm"] = p_lm
    return JumpTestReport(Method.CC, statistic=t, normalized=t, pvalue=p, tuning=tuning,
                          location=lm.location)


def dense_shift_mu(cfg: AjConfig, theta: float, mark: MarkLaw, tau0: float) -> float:
    """Mean of the AJ statistic's normal limit under the dense local alternative."""
    if not tau0 > 0:
        raise InvalidArgument(f"tau0 must be positive, got {tau0}")
    if theta < 0:
        raise InvalidArgument(f"theta must be non-negative, got {theta}")
    moments = kernel_moments(cfg, mark)
    return theta * moments.d_pk / (gaussian_abs_moment(cfg.p) * tau0)


def dense_power_curve(alpha: float, mu: float, tol: float = 1e-6) -> float:
    """Asymptotic power of the level-``alpha`` Cauchy test when the AJ limit is ``N(mu, 1)``."""
    c = cauchy_critical(alpha)

    def integrand(z):
        a = _cauchy_transform(2.0 * norm.sf(abs(z)))
        return float(_cauchy_upper(2.0 * c - a)) * norm.pdf(z - mu)

    lo, hi = mu - 10.0, mu + 10.0
    points = [0.0] if lo < 0.0 < hi else None
    with np.errstate(divide="ignore", invalid="ignore"):
        value, err = integrate.quad(integrand, lo, hi, points=points, epsabs=tol / 10, epsrel=0, limit=200)
    if not np.isfinite(value) or err > tol:
        raise NumericFailure(f"quadrature error {err} exceeds {tol}")
    return float(value)


def aj_oracle_fixed_stat(
    path: LogPricePath,
    jumps: Sequence[JumpRecord],
    spot_at_jumps: Sequence[float],
    cfg: AjConfig = AjConfig(),
) -> float:
    """AJ ratio centred at one and scaled by the jump-dependent oracle variance.

    ``spot_at_jumps`` holds the spot variances at the jump times.
    """
    if len(jumps) == 0:
        raise InvalidArgument("oracle statistic needs at least one jump")
    check_jump_sequence(jumps)
    spot = np.asarray(spot_at_jumps, dtype=float)
    if spot.shape != (len(jumps),) or np.any(spot <= 0):
        raise InvalidArgument("need one positive spot variance per jump")
    tau_f_sq = oracle_tau_f_sq([j.size for j in jumps], spot, cfg)
    r = increments(path)
    B = _power_variation(r, cfg.p)
    if B == 0:
        raise DegeneratePath("power variation of the path is zero")
    ratio = _block_power_variation(r, cfg.p, cfg.k) / B
    return float(path.delta**-0.5 * (ratio - 1.0) / math.sqrt(tau_f_sq))


def oracle_tau_f_sq(jump_sizes: Sequence[float], spot_at_jumps: Sequence[float], cfg: AjConfig) -> float:
    """Oracle variance of the centred AJ ratio under fixed jumps."""
    kappa = np.abs(np.asarray(jump_sizes, dtype=float))
    Bp = np.sum(kappa**cfg.p)
    return float(cfg.p**2 * (cfg.k - 1) / Bp**2 * np.sum(kappa ** (2 * cfg.p - 2) * np.asarray(spot_at_jumps)))
