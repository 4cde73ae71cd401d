"""Jump tests for prices observed with additive i.i.d. noise.

Two components mirror the noiseless battery: a pre-averaged power-variation
ratio with bias correction for the noise (``pa_*``) and a maximum of
standardized local-average differences on a disjoint grid (``la_*``), whose
local variance uses a two-scale spot-variance plug-in (``tsrsv_spot``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, signal

from jumplab.errors import (
    DegeneratePath,
    DegenerateVariance,
    InsufficientData,
    InvalidArgument,
)
from jumplab.frictionless import (
    cauchy_combine,
    gaussian_abs_moment,
    gumbel_pvalue,
    lm_normalizers,
    two_sided_pvalue,
)
from jumplab.model import JumpTestReport, MarkLaw, Method, ObservedPath, increments
from jumplab.rng import substream

SIGMA_FLOOR = 1e-8


def _double_factorial_moment(r: int) -> int:
    """``E N^r`` for even ``r``: ``(r-1)!!``."""
    out = 1
    for x in range(r - 1, 0, -2):
        out *= x
    return out


def _rho_exact(p: int) -> list[Fraction]:
    if int(p) != p or p < 4 or p % 2:
        raise InvalidArgument(f"p must be an even integer >= 4, got {p}")
    p = int(p)
    rho = [Fraction(1)]
    for j in range(1, p // 2 + 1):
        acc = sum(
            Fraction(2**l * _double_factorial_moment(2 * j - 2 * l) * math.comb(p - 2 * l, p - 2 * j)) * rho[l]
            for l in range(j)
        )
        lead = 2**j * math.comb(p - 2 * j, p - 2 * j)
        rho.append(-acc / lead)
    return rho


def rho_coefficients(p: int) -> np.ndarray:
    """Noise bias-correction weights ``rho_0..rho_{p/2}`` (forward substitution, exact rationals)."""
    return np.array([float(x) for x in _rho_exact(p)])


def even_gaussian_moment(q: int, v: float, x: float) -> float:
    """``E|sqrt(v) N + x|^q`` for even ``q`` by binomial expansion."""
    return sum(
        math.comb(q, 2 * j) * _double_factorial_moment(q - 2 * j) * v ** ((q - 2 * j) / 2) * x ** (2 * j)
        for j in range(q // 2 + 1)
    )


def noise_shift_identity_check(p: int, a: float, b: float, x: float) -> tuple[float, float]:
    """Both sides of the bias-correction identity with a deterministic shift ``x``."""
    rho = rho_coefficients(p)
    lhs = sum(rho[l] * even_gaussian_moment(p - 2 * l, a + b, x) * (2 * b) ** l for l in range(p // 2 + 1))
    rhs = even_gaussian_moment(p, a, x)
    return float(lhs), float(rhs)


class WeightKind(str, enum.Enum):
    SINE = "sine"
    SINE_POWER = "sine_power"


@dataclass(frozen=True, eq=False)
class PreAveragingWeights:
    """Weight profile ``sin(pi u) ** a`` on ``[0, 1]`` discretized at ``j / k_n``."""

    kind: WeightKind
    k_n: int
    a: float
    phi: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)

    def function(self, u):
        u = np.asarray(u, dtype=float)
        return np.where((u >= 0) & (u <= 1), np.abs(np.sin(np.pi * u)) ** self.a, 0.0)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        s = np.abs(np.sin(np.pi * u))
        return self.a * np.pi * s ** (self.a - 1) * np.cos(np.pi * u)

    def bar(self, q: float) -> float:
        """Integral of ``|phi|^q`` over ``[0, 1]``."""
        return _weight_integral(self.a, float(q), False)

    def bar_prime(self, q: float) -> float:
        """Integral of ``|phi'|^q`` over ``[0, 1]``."""
        return _weight_integral(self.a, float(q), True)


@lru_cache(maxsize=256)
def _weight_integral(a: float, q: float, derivative: bool) -> float:
    if derivative:
        def f(u):
            return abs(a * math.pi * abs(math.sin(math.pi * u)) ** (a - 1) * math.cos(math.pi * u)) ** q
    else:
        def f(u):
            return abs(math.sin(math.pi * u)) ** (a * q)
    value, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value


def build_weights(kind: WeightKind | str, k_n: int, a: float | None = None) -> PreAveragingWeights:
    kind = WeightKind(kind)
    if int(k_n) != k_n or k_n < 4:
        raise InvalidArgument(f"k_n must be an integer >= 4, got {k_n}")
    if kind is WeightKind.SINE:
        a = 1.0
    elif a is None or not a > 1:
        raise InvalidArgument(f"sine-power weights need a > 1, got {a}")
    k_n = int(k_n)
    phi = np.abs(np.sin(np.pi * np.arange(k_n + 1) / k_n)) ** a
    phi[0] = phi[-1] = 0.0
    phi.flags.writeable = False
    dphi = np.diff(phi)
    dphi.flags.writeable = False
    return PreAveragingWeights(kind, k_n, float(a), phi, dphi)


def gamma_constants(g: PreAveragingWeights, h: PreAveragingWeights, p: int) -> tuple[float, float, float]:
    """``(gamma, gamma', gamma'')`` for the weight pair ``(g, h)``."""
    gam = g.bar(2) / h.bar(2)
    gam1 = g.bar(p) / h.bar(p)
    return gam, gam1, gam ** (p / 2) / gam1


@dataclass(frozen=True)
class PaConfig:
    k_n: int
    r_n: int
    p: int = 4
    g: PreAveragingWeights | None = None
    h: PreAveragingWeights | None = None
    theta: float | None = None
    h_power: float = 2.0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 4 or self.p % 2:
            raise InvalidArgument(f"p must be an even integer >= 4, got {self.p}")
        if self.r_n <= self.k_n:
            raise InvalidArgument(f"block length r_n={self.r_n} must exceed k_n={self.k_n}")
        if self.g is None:
            object.__setattr__(self, "g", build_weights(WeightKind.SINE, self.k_n))
        if self.h is None:
            object.__setattr__(self, "h", build_weights(WeightKind.SINE_POWER, self.k_n, self.h_power))
        if self.g.k_n != self.k_n or self.h.k_n != self.k_n:
            raise InvalidArgument("weights must be discretized at k_n")
        if not self.gammas[2] > 1:
            raise InvalidArgument(f"gamma'' = {self.gammas[2]} must exceed 1 for this weight pair")

    @property
    def gammas(self) -> tuple[float, float, float]:
        return gamma_constants(self.g, self.h, self.p)

    @classmethod
    def default(cls, n: int, delta: float, theta: float = 1.5, r_exponent: float = 0.85, **kw) -> "PaConfig":
        """``k_n = ceil(theta / sqrt(delta))`` and ``r_n = ceil(delta ** -r_exponent)``."""
        k_n = int(math.ceil(theta / math.sqrt(delta)))
        r_n = max(int(math.ceil(delta ** (-r_exponent))), k_n + 1)
        return cls(k_n=k_n, r_n=r_n, theta=theta, **kw)


@dataclass(frozen=True)
class LaConfig:
    M_n: int
    c_K: float = 1.0
    c_h: float = 1.0
    sigma_floor: float = SIGMA_FLOOR
    lam: float | None = None

    def __post_init__(self):
        if int(self.M_n) != self.M_n or self.M_n < 1:
            raise InvalidArgument(f"M_n must be a positive integer, got {self.M_n}")
        if not (self.c_K > 0 and self.c_h > 0 and self.sigma_floor > 0):
            raise InvalidArgument("c_K, c_h and the variance floor must be positive")

    @classmethod
    def default(cls, delta: float, lam: float = 0.125, **kw) -> "LaConfig":
        """``M_n = ceil(lam / sqrt(delta))``."""
        return cls(M_n=max(1, int(math.ceil(lam / math.sqrt(delta)))), lam=lam, **kw)

    def grid(self, n: int) -> np.ndarray:
        """Left ends ``0, 2M, 4M, ...`` of the disjoint local-average windows."""
        if 2 * self.M_n > n:
            raise InsufficientData(f"2 M_n = {2 * self.M_n} exceeds n = {n}")
        count = (n - 2 * self.M_n) // (2 * self.M_n) + 1
        return 2 * self.M_n * np.arange(count)

    def tsrsv_tuning(self, delta: float) -> tuple[int, int]:
        """``(K_n^SV, H_n)``."""
        return int(math.floor(self.c_K * delta ** (-2 / 3))), int(math.floor(self.c_h * delta ** (-5 / 6)))


@dataclass(frozen=True, eq=False)
class SpotVarianceSeries:
    grid_indices: np.ndarray
    sigma_sq: np.ndarray
    omega_sq_hat: float


def _noise_variance(y: np.ndarray) -> np.ndarray:
    d = np.diff(y, axis=-1)
    return np.sum(d * d, axis=-1) / (2 * d.shape[-1])


def noise_variance_hat(Y: ObservedPath) -> float:
    """Half the mean squared increment; consistent for the noise variance when noise dominates."""
    return float(_noise_variance(Y.values))


def _tsrv_sums(y: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    d1 = np.diff(y, axis=-1)
    s2 = np.cumsum(d1 * d1, axis=-1)
    dk = y[..., K:] - y[..., :-K]
    s1 = np.cumsum(dk * dk, axis=-1)
    return s1, s2


def _tsrv_eval(s1: np.ndarray, s2: np.ndarray, K: int, r) -> np.ndarray:
    r = np.asarray(r)
    ok = r >= K
    rr = np.where(ok, r, K)
    slow = s1[..., rr - K] / K
    fast = (rr - K + 1) / (K * rr) * s2[..., rr - 1]
    return np.where(ok, slow - fast, 0.0)


def _tsrv_at(y: np.ndarray, K: int, r: np.ndarray) -> np.ndarray:
    """Two-scale realized variance up to observation ``r`` (zero for ``r < K``)."""
    return _tsrv_eval(*_tsrv_sums(y, K), K, r)


def _tsrsv(y: np.ndarray, delta: float, cfg: LaConfig, grid: np.ndarray) -> np.ndarray:
    n = y.shape[-1] - 1
    K, H = cfg.tsrsv_tuning(delta)
    if not n > H > K >= 2:
        raise InsufficientData(f"spot-variance tuning needs n > H_n > K_n >= 2, got n={n}, H_n={H}, K_n={K}")
    j_star = np.maximum(grid, H)
    s1, s2 = _tsrv_sums(y, K)
    est = (_tsrv_eval(s1, s2, K, j_star) - _tsrv_eval(s1, s2, K, j_star - H)) / (H * delta)
    return np.maximum(est, cfg.sigma_floor)


def tsrsv_spot(Y: ObservedPath, cfg: LaConfig) -> SpotVarianceSeries:
    """Two-scale spot variances on the disjoint local-average grid, floored at ``cfg.sigma_floor``."""
    grid = cfg.grid(Y.n)
    sigma_sq = _tsrsv(Y.values, Y.delta, cfg, grid)
    return SpotVarianceSeries(grid, sigma_sq, noise_variance_hat(Y))


def local_average_weights(M: int) -> np.ndarray:
    """Triangular weights ``min(u, 2M - u)``, ``u = 1..2M-1``, linking a local-average difference to increments."""
    u = np.arange(1, 2 * M)
    return np.minimum(u, 2 * M - u)


def _la_differences(y: np.ndarray, M: int, count: int) -> np.ndarray:
    blocks = y[..., : 2 * M * count].reshape(y.shape[:-1] + (count, 2 * M))
    return blocks[..., M:].mean(axis=-1) - blocks[..., :M].mean(axis=-1)


def la_variance_proxy(omega_sq, sigma_sq, M: int, delta: float):
    """Variance of ``sqrt(M)`` times a local-average difference: noise plus diffusive part."""
    return 2.0 * omega_sq + sigma_sq * (2.0 / 3.0 * M * M * delta + delta / 3.0)


def _la_max(y: np.ndarray, delta: float, cfg: LaConfig, omega_sq, sigma_sq):
    M = cfg.M_n
    count = sigma_sq.shape[-1]
    L = _la_differences(y, M, count)
    v_sq = la_variance_proxy(np.asarray(omega_sq)[..., None], sigma_sq, M, delta)
    if np.any(v_sq <= 0):
        raise DegenerateVariance("local-average variance proxy is zero")
    X = math.sqrt(M) * np.abs(L) / np.sqrt(v_sq)
    idx = np.argmax(X, axis=-1)
    return np.take_along_axis(X, idx[..., None], axis=-1)[..., 0], idx


def la_statistic_batch(y: np.ndarray, delta: float, cfg: LaConfig) -> np.ndarray:
    """Feasible local-average maxima for each row of ``y``, nuisances re-estimated per row."""
    n = y.shape[-1] - 1
    grid = cfg.grid(n)
    sigma_sq = _tsrsv(y, delta, cfg, grid)
    M, _ = _la_max(y, delta, cfg, _noise_variance(y), sigma_sq)
    return M


def la_normalizers(N: int) -> tuple[float, float]:
    return lm_normalizers(N)


def la_test(Y: ObservedPath, cfg: LaConfig, spot: SpotVarianceSeries | None = None) -> JumpTestReport:
    """Maximum of standardized local-average differences on the disjoint grid."""
    grid = cfg.grid(Y.n)
    N = grid.size
    if N < 8:
        raise InsufficientData(f"local-average grid has {N} < 8 windows")
    if spot is None:
        spot = tsrsv_spot(Y, cfg)
    elif not np.array_equal(spot.grid_indices, grid):
        raise InvalidArgument("spot-variance grid does not match the local-average grid")
    M, idx = _la_max(Y.values, Y.delta, cfg, spot.omega_sq_hat, np.asarray(spot.sigma_sq))
    A, B = la_normalizers(N)
    xi = (M - A) / B
    K, H = cfg.tsrsv_tuning(Y.delta)
    return JumpTestReport(
        Method.LA,
        statistic=float(M),
        normalized=float(xi),
        pvalue=float(gumbel_pvalue(xi)),
        tuning={"M_n": cfg.M_n, "N_n": N, "K_sv": K, "H_n": H, "omega_sq_hat": spot.omega_sq_hat},
        location=int(grid[int(idx)]),
    )


def _preaverage(d: np.ndarray, w: PreAveragingWeights) -> tuple[np.ndarray, np.ndarray]:
    k = w.k_n
    n = d.shape[-1]
    if n < k:
        raise InsufficientData(f"n={n} < k_n={k}")
    # correlate: out[i] = sum_j kernel[j] * d[i + j]
    bar = signal.correlate(d, w.phi[1:k][None, :] if d.ndim == 2 else w.phi[1:k], mode="valid", method="auto")
    bar = bar[..., : n - k + 1]
    dd = d * d
    kern = w.dphi**2
    hat = signal.correlate(dd, kern[None, :] if d.ndim == 2 else kern, mode="valid", method="auto")
    return bar, hat


def preaveraged_series(Y: ObservedPath, w: PreAveragingWeights) -> tuple[np.ndarray, np.ndarray]:
    """Pre-averaged increments and their noise-bias companions, each of length ``n - k_n + 1``."""
    return _preaverage(increments(Y), w)


def _psi(bar: np.ndarray, hat: np.ndarray, rho: np.ndarray, p: int) -> np.ndarray:
    ab = np.abs(bar)
    out = np.zeros_like(bar)
    for l, coef in enumerate(rho):
        out += coef * ab ** (p - 2 * l) * np.abs(hat) ** l
    return out


def _pa_pieces(Y: ObservedPath, cfg: PaConfig):
    d = increments(Y)
    rho = rho_coefficients(cfg.p)
    psi_g = _psi(*_preaverage(d, cfg.g), rho, cfg.p)
    psi_h = _psi(*_preaverage(d, cfg.h), rho, cfg.p)
    return psi_g, psi_h


def pa_ratio(Y: ObservedPath, cfg: PaConfig) -> float:
    """Noise-corrected ratio of pre-averaged power variations for weights ``g`` and ``h``."""
    psi_g, psi_h = _pa_pieces(Y, cfg)
    _, gam1, _ = cfg.gammas
    den = gam1 * psi_h.sum()
    if den == 0:
        raise DegeneratePath("pre-averaged power variation is zero")
    return float(psi_g.sum() / den)


def pa_test(Y: ObservedPath, cfg: PaConfig) -> JumpTestReport:
    """Pre-averaged ratio studentized by a block self-normalizer.

    Window contributions are summed over block interiors (windows that stay
    inside their block) after centring at the mean interior contribution.
    The sum of squared block sums is scaled by the ratio of all windows to
    interior windows, so it estimates the variance of the full-window ratio.
    """
    n = Y.n
    J = n // cfg.r_n
    if J < 2:
        raise InsufficientData(f"need at least two blocks of length r_n={cfg.r_n}, n={n}")
    psi_g, psi_h = _pa_pieces(Y, cfg)
    _, gam1, gam2 = cfg.gammas
    Vh = psi_h.sum()
    if Vh == 0:
        raise DegeneratePath("pre-averaged power variation is zero")
    R = psi_g.sum() / (gam1 * Vh)
    zeta = psi_g - gam1 * gam2 * psi_h
    r, k = cfg.r_n, cfg.k_n
    interior = zeta[np.arange(J)[:, None] * r + np.arange(r - k)]
    scale = Y.delta ** -0.25 / (gam1 * Vh)
    blocks = scale * (interior - interior.mean()).sum(axis=1)
    # interiors cover J(r - k) of the n - k + 1 windows; the ratio tends to one
    var = float(np.sum(blocks * blocks)) * zeta.size / interior.size
    if not var > 0:
        raise DegenerateVariance("block self-normalizer is zero")
    z = Y.delta ** -0.25 * (R - gam2) / math.sqrt(var)
    return JumpTestReport(
        Method.PA,
        statistic=float(R),
        normalized=float(z),
        pvalue=float(two_sided_pvalue(z)),
        tuning={"p": cfg.p, "k_n": k, "r_n": r, "J_n": J, "gamma_pp": gam2, "varsigma_sq": var},
    )


def noisy_cauchy(p_pa: float, p_la: float) -> tuple[float, float]:
    return cauchy_combine([p_pa, p_la])


def ccn_test(pa: JumpTestReport, la: JumpTestReport, la_pvalue: float | None = None) -> JumpTestReport:
    p_la = la.pvalue if la_pvalue is None else la_pvalue
    t, p = noisy_cauchy(pa.pvalue, p_la)
    tuning = dict(pa.tuning)
    tuning.update({f"la_{k}": v for k, v in la.tuning.items()})
    tuning["p_pa"] = pa.pvalue
    tuning["p_la"] = p_la
    return JumpTestReport(Method.CCN, statistic=t, normalized=t, pvalue=p, tuning=tuning, location=la.location)


def noisy_dense_shift(
    cfg: PaConfig,
    vartheta: float,
    mark: MarkLaw,
    sigma_sq_hat: float,
    theta: float,
    mc_budget: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Mean of the pre-averaged statistic's normal limit under the noisy dense alternative.

    ``sigma_sq_hat`` stands in for the null variance of the studentized
    ratio; ``theta`` is the pre-averaging window scale ``k_n sqrt(delta)``.
    The mark expectation is Monte Carlo, the ``u``-integral is quadrature.
    """
    if not sigma_sq_hat > 0:
        raise InvalidArgument(f"variance estimate must be positive, got {sigma_sq_hat}")
    if not theta > 0:
        raise InvalidArgument(f"theta must be positive, got {theta}")
    if vartheta == 0:
        return 0.0
    p = cfg.p
    gam, gam1, gam2 = cfg.gammas
    y = mark.sample(substream(seed, "noisy-dense-marks"), int(mc_budget))
    y_moments = {j: float(np.mean(y ** (2 * j))) for j in range(1, p // 2 + 1)}

    def d_phi(w: PreAveragingWeights) -> float:
        v = theta * w.bar(2)
        # E|sqrt(v) E + y phi(u)|^p - m_p v^{p/2}, integrated over u and y
        return sum(
            math.comb(p, 2 * j) * _double_factorial_moment(p - 2 * j) * v ** (p / 2 - j) * y_moments[j] * w.bar(2 * j)
            for j in range(1, p // 2 + 1)
        )

    m_p = gaussian_abs_moment(p)
    den = math.sqrt(sigma_sq_hat) * gam1 * m_p * theta ** (p / 2 - 1) * cfg.h.bar(2) ** (p / 2)
    return vartheta * (d_phi(cfg.g) - gam1 * gam2 * d_phi(cfg.h)) / den
