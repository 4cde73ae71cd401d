import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import brownian_path
from jumplab.errors import DegeneratePath, DegenerateVariance, InsufficientData, InvalidArgument
from jumplab.frictionless import (
    AjConfig,
    LmConfig,
    aj_oracle_fixed_stat,
    aj_test,
    block_kernel_u,
    block_power_variation,
    cauchy_combine,
    cauchy_critical,
    cc_test,
    dense_power_curve,
    dense_shift_mu,
    gaussian_abs_moment,
    kernel_moments,
    lm_normalizers,
    lm_test,
    oracle_tau_f_sq,
    power_variation,
)
from jumplab.model import JumpRecord, LogPricePath, MarkLaw, aggregate_last_tick


@pytest.mark.parametrize("r, expected", [(2, 1.0), (4, 3.0), (1, math.sqrt(2 / math.pi)), (8, 105.0)])
def test_gaussian_abs_moment(r, expected):
    assert gaussian_abs_moment(r) == pytest.approx(expected, abs=1e-12)


def test_gaussian_abs_moment_rejects_negative():
    with pytest.raises(InvalidArgument):
        gaussian_abs_moment(-1)


def test_power_variation_examples(rng):
    assert power_variation(LogPricePath(np.zeros(5), 1.0), 4) == 0
    assert power_variation(LogPricePath([0.0, 1.0, -1.0], 1.0), 2) == 5.0
    p = brownian_path(rng, 500)
    r = np.diff(p.values)
    loop = 0.0
    for x in r:
        loop += x * x
    assert power_variation(p, 2) == pytest.approx(loop, rel=1e-12)


def test_block_power_variation_examples(rng):
    assert block_power_variation(LogPricePath([0.0, 1.0, 3.0, 6.0], 1.0), 2, 2) == 9.0
    with pytest.raises(InvalidArgument):
        block_power_variation(LogPricePath([0.0, 1.0, 3.0], 1.0), 2, 1)
    with pytest.raises(InsufficientData):
        block_power_variation(LogPricePath([0.0, 1.0, 3.0], 1.0), 2, 3)
    p = brownian_path(rng, 999)
    for k in (2, 3, 4):
        assert block_power_variation(p, 4, k) == pytest.approx(power_variation(aggregate_last_tick(p, k), 4), rel=1e-12)


@pytest.mark.parametrize("x, expected", [((0.0, 0.0), 0.0), ((1.0, 1.0), 12.0), ((1.0, -1.0), -4.0)])
def test_block_kernel_examples(x, expected):
    assert block_kernel_u(x, 4, 2) == expected


def test_block_kernel_length_mismatch():
    with pytest.raises(InvalidArgument):
        block_kernel_u((1.0, 2.0, 3.0), 4, 2)


def _gauss_hermite_varsigma(p: int, k: int, nodes: int = 12) -> float:
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    grids = np.meshgrid(*([x] * k), indexing="ij")
    weight = np.ones_like(grids[0])
    for i, g in enumerate(grids):
        weight = weight * w.reshape([-1 if j == i else 1 for j in range(k)])
    s = sum(grids)
    u = np.abs(s) ** p - k ** (p / 2 - 1) * sum(np.abs(g) ** p for g in grids)
    mean = np.sum(weight * u)
    return float(np.sum(weight * u * u) - mean**2)


@pytest.mark.parametrize("k", [2, 3])
def test_kernel_variance_matches_quadrature_oracle(k):
    # for even integer p the kernel is a polynomial, so Gauss-Hermite is exact
    exact = _gauss_hermite_varsigma(4, k)
    km = kernel_moments(AjConfig(p=4, k=k, kernel_mc_paths=2_000_000, kernel_mc_seed=7))
    assert abs(km.varsigma_sq - exact) < 4 * km.standard_error
    if k == 2:
        assert exact == pytest.approx(960.0, rel=1e-10)


def test_kernel_moments_deterministic_and_validated():
    cfg = AjConfig(kernel_mc_paths=200_000, kernel_mc_seed=3)
    a = kernel_moments(cfg)
    from jumplab.frictionless import _kernel_moments

    b = _kernel_moments.__wrapped__(4.0, 2, 200_000, 3, None)
    assert a.varsigma_sq == b.varsigma_sq and a.standard_error == b.standard_error
    with pytest.raises(InvalidArgument):
        kernel_moments(AjConfig(kernel_mc_paths=10_000))


def test_d_pk_vanishes_for_zero_marks():
    km = kernel_moments(AjConfig(kernel_mc_paths=200_000), MarkLaw.point(0.0))
    assert km.d_pk == 0.0


def test_aj_config_validation():
    with pytest.raises(InvalidArgument):
        AjConfig(p=3)
    with pytest.raises(InvalidArgument):
        AjConfig(k=1)


def test_aj_brownian_ratio_near_two(rng, fast_aj):
    rep = aj_test(brownian_path(rng), fast_aj)
    assert abs(rep.statistic - 2.0) < 0.1
    assert rep.tuning["k"] == 2 and 0 <= rep.pvalue <= 1


def test_aj_dominant_jump_ratio_near_one(rng, fast_aj):
    ratios = []
    for _ in range(50):
        p = brownian_path(rng, 4_680)
        v = p.values.copy()
        v[2_341:] += 1.0
        ratios.append(aj_test(LogPricePath(v, p.delta), fast_aj).statistic)
    assert abs(np.median(ratios) - 1.0) < 0.05


def test_aj_invariances(rng, fast_aj):
    p = brownian_path(rng, 2_000)
    base = aj_test(p, fast_aj)
    shifted = aj_test(LogPricePath(p.values + 3.0, p.delta), fast_aj)
    r = np.diff(p.values)
    same_incr = aj_test(LogPricePath(np.concatenate([[0.0], np.cumsum(r)]), p.delta), fast_aj)
    assert shifted.statistic == pytest.approx(base.statistic, rel=1e-12)
    assert same_incr.statistic == pytest.approx(base.statistic, rel=1e-12)
    scaled = aj_test(LogPricePath(2.5 * p.values, p.delta), fast_aj)
    assert scaled.statistic == pytest.approx(base.statistic, rel=1e-12)
    assert scaled.normalized == pytest.approx(base.normalized, rel=1e-10)


def test_aj_degenerate_path(fast_aj):
    with pytest.raises(DegeneratePath):
        aj_test(LogPricePath(np.ones(100), 0.01), fast_aj)


def test_lm_normalizer_value():
    C, a = lm_normalizers(23_400)
    assert C == pytest.approx(4.1007, abs=1e-4)
    assert a == pytest.approx(1 / math.sqrt(2 * math.log(23_400)))


def test_lm_window_rules():
    assert LmConfig().resolve_window(23_400, 1 / 23_400) == math.ceil(23_400**0.6)
    assert LmConfig(rho=0.6).resolve_window(4_680, 1 / 4_680) == math.floor(4_680**0.6)
    with pytest.raises(InsufficientData):
        LmConfig(window=60).resolve_window(100, 0.01)
    with pytest.raises(InvalidArgument):
        LmConfig(window=1)


def test_lm_affine_invariance(rng):
    p = brownian_path(rng, 3_000)
    a = lm_test(p)
    b = lm_test(LogPricePath(3.0 * p.values - 7.0, p.delta))
    assert b.statistic == pytest.approx(a.statistic, rel=1e-10)
    assert b.location == a.location


def test_lm_locates_jump_and_rejects(rng):
    hits = 0
    for _ in range(50):
        p = brownian_path(rng, 4_680)
        v = p.values.copy()
        v[2_000:] += 0.5
        rep = lm_test(LogPricePath(v, p.delta))
        hits += rep.pvalue < 0.01 and rep.location == 2_000
    assert hits == 50


def test_lm_degenerate_variance():
    v = np.zeros(400)
    v[200:] = 1.0
    with pytest.raises(DegenerateVariance):
        lm_test(LogPricePath(v, 1 / 399), LmConfig(window=10, demean=False))


def test_lm_known_spot_variance_gives_exact_gumbel_input(rng):
    n = 5_000
    z = rng.standard_normal(n)
    p = LogPricePath(np.concatenate([[0.0], np.cumsum(z)]), 1 / n)
    rep = lm_test(p, LmConfig(demean=False), spot_variance=np.ones(n))
    K = rep.tuning["K_n"]
    assert rep.statistic == pytest.approx(np.abs(z[int(K) - 1 :]).max())


def test_cauchy_examples():
    assert cauchy_combine([0.5, 0.5]) == (0.0, 0.5)
    t, p = cauchy_combine([0.0, 0.3])
    assert np.isfinite(t) and 0 < p < 1e-13
    with pytest.raises(InvalidArgument):
        cauchy_combine([])
    with pytest.raises(InvalidArgument):
        cauchy_combine([0.2, 0.3], [0.7, 0.7])


@settings(max_examples=200, deadline=None)
@given(q=st.floats(1e-12, 1 - 1e-12))
def test_cauchy_fixed_point(q):
    assert cauchy_combine([q, q])[1] == pytest.approx(q, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(p1=st.floats(1e-6, 1 - 1e-6), p2=st.floats(1e-6, 1 - 1e-6), shrink=st.floats(0.05, 0.95))
def test_cauchy_monotone(p1, p2, shrink):
    assert cauchy_combine([p1 * shrink, p2])[1] < cauchy_combine([p1, p2])[1]


def test_cauchy_uniform_under_independence():
    u = np.random.default_rng(4).uniform(size=(100_000, 2))
    from jumplab.frictionless import _cauchy_transform, _cauchy_upper

    comb = _cauchy_upper(_cauchy_transform(u).mean(axis=1))
    assert stats.kstest(comb, "uniform").pvalue > 0.01


@pytest.mark.parametrize("alpha, expected", [(0.5, 0.0), (0.25, 1.0), (0.05, 6.313751514675)])
def test_cauchy_critical(alpha, expected):
    assert cauchy_critical(alpha) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_cauchy_critical_boundaries(alpha):
    with pytest.raises(InvalidArgument):
        cauchy_critical(alpha)


def test_cc_uses_override(rng, fast_aj):
    p = brownian_path(rng, 4_680)
    rep = cc_test(aj_test(p, fast_aj), lm_test(p), lm_pvalue=0.5)
    assert rep.tuning["p_lm"] == 0.5
    assert rep.pvalue == pytest.approx(cauchy_combine([rep.tuning["p_aj"], 0.5])[1])


def test_dense_shift_properties():
    cfg = AjConfig(kernel_mc_paths=200_000)
    law = MarkLaw.normal(1.0)
    assert dense_shift_mu(cfg, 0.0, law, 2.0) == 0.0
    assert dense_shift_mu(cfg, 5.0, MarkLaw.point(0.0), 2.0) == 0.0
    assert dense_shift_mu(cfg, 2.0, law, 2.0) == 2 * dense_shift_mu(cfg, 1.0, law, 2.0)
    with pytest.raises(InvalidArgument):
        dense_shift_mu(cfg, 1.0, law, 0.0)


def test_dense_power_curve():
    assert dense_power_curve(0.05, 0.0) == pytest.approx(0.05, abs=1e-6)
    assert dense_power_curve(0.05, 2.0) > dense_power_curve(0.05, 1.0)
    assert dense_power_curve(0.05, 8.0) > 0.99


def test_dense_power_curve_matches_simulation():
    rng = np.random.default_rng(11)
    mu, alpha, N = 2.0, 0.05, 400_000
    z = rng.normal(mu, 1.0, N)
    c = rng.standard_cauchy(N)
    a = np.tan(np.pi * (0.5 - 2 * stats.norm.sf(np.abs(z))))
    freq = np.mean((a + c) / 2 >= cauchy_critical(alpha))
    assert abs(freq - dense_power_curve(alpha, mu)) < 4 * math.sqrt(freq * (1 - freq) / N)


def test_oracle_tau_values():
    cfg = AjConfig()
    assert oracle_tau_f_sq([1.0], [0.16], cfg) == pytest.approx(2.56)
    kappa = [0.3, -0.7]
    spot = [0.1, 0.2]
    t1 = math.sqrt(oracle_tau_f_sq(kappa, spot, cfg))
    t2 = math.sqrt(oracle_tau_f_sq([2 * k for k in kappa], spot, cfg))
    assert t2 == pytest.approx(t1 / 2, rel=1e-12)


def test_oracle_statistic_validation(rng):
    p = brownian_path(rng, 1_000)
    with pytest.raises(InvalidArgument):
        aj_oracle_fixed_stat(p, [], [])
    with pytest.raises(InvalidArgument):
        aj_oracle_fixed_stat(p, [JumpRecord(0.5, 1.0)], [0.0])
