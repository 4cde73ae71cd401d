"""Acceptance criteria 1-13. Each test prints one PASS/FAIL line.

Criteria 6-13 are Monte Carlo runs (marked ``slow``); seeds are fixed in
advance so every run is reproducible.
"""
import math
import os

import numpy as np
import pytest
from scipy import stats

from jumplab.calibrate import BootstrapConfig
from jumplab.frictionless import (
    AjConfig,
    LmConfig,
    _cauchy_transform,
    _cauchy_upper,
    aj_oracle_fixed_stat,
    aj_test,
    cauchy_combine,
    gaussian_abs_moment,
    lm_test,
)
from jumplab.harness import Design, ExperimentConfig, MethodSpec, SimulationSpec, run_experiment
from jumplab.model import JumpRecord, LogPricePath
from jumplab.noise import local_average_weights, noise_shift_identity_check, rho_coefficients
from jumplab.rng import derive_seed, substream
from jumplab.simulate import HestonParams, simulate_heston_batch

WORKERS = os.cpu_count() or 1
AJ_FAST = AjConfig(kernel_mc_paths=1_000_000)


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")

    return emit


def band(target: float, f: float, R: int) -> tuple[float, float]:
    half = max(0.02, 4 * math.sqrt(f * (1 - f) / R))
    return target - half, target + half


def test_01_rho_coefficients(report):
    exact = np.array_equal(rho_coefficients(4), [1.0, -3.0, 0.75])
    worst = 0.0
    for p in (4, 6, 8, 10):
        rho = rho_coefficients(p)
        for j in range(1, p // 2 + 1):
            # even Gaussian moments are the integers (r-1)!!
            res = math.fsum(
                2**l * math.prod(range(2 * j - 2 * l - 1, 0, -2)) * math.comb(p - 2 * l, p - 2 * j) * rho[l]
                for l in range(j + 1)
            )
            worst = max(worst, abs(res))
    ok = exact and worst < 1e-12
    report(1, ok, f"rho(4) exact={exact}, max residual={worst:.2e}")
    assert ok


def test_02_noise_correction_identity(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for p in (4, 6, 8):
        for a, b, x in zip(rng.uniform(0.01, 2, 1000), rng.uniform(0.01, 2, 1000), rng.uniform(-2, 2, 1000)):
            lhs, rhs = noise_shift_identity_check(p, a, b, x)
            worst = max(worst, abs(lhs - rhs))
    report(2, worst < 1e-8, f"max |lhs-rhs|={worst:.2e}")
    assert worst < 1e-8


def test_03_triangular_weights(report):
    bad = [M for M in range(1, 51) if 3 * int(np.sum(local_average_weights(M) ** 2)) != 2 * M**3 + M]
    report(3, not bad, f"mismatches for M in 1..50: {bad}")
    assert not bad


def test_04_gaussian_moments(report):
    errs = [abs(gaussian_abs_moment(2) - 1), abs(gaussian_abs_moment(4) - 3), abs(gaussian_abs_moment(1) - math.sqrt(2 / math.pi))]
    report(4, max(errs) < 1e-12, f"max error={max(errs):.1e}")
    assert max(errs) < 1e-12


def test_05_cauchy_fixed_point(report):
    qs = np.concatenate([[1e-10, 1e-4, 0.5, 0.999999], np.random.default_rng(5).uniform(size=1000)])
    worst = max(abs(cauchy_combine([q, q])[1] - q) for q in qs)
    report(5, worst < 1e-12, f"max |p_C - q|={worst:.1e}")
    assert worst < 1e-12


@pytest.mark.slow
def test_06_null_pvalue_uniformity(report):
    n = 23_400
    rng = np.random.default_rng(20260106)
    pv = np.empty(2000)
    for i in range(pv.size):
        z = rng.standard_normal(n)
        path = LogPricePath(np.concatenate([[0.0], np.cumsum(z)]), 1 / n)
        pv[i] = lm_test(path, LmConfig(demean=False), spot_variance=np.ones(n)).pvalue
    ks_lm = stats.kstest(pv, "uniform").pvalue
    u = rng.uniform(size=(2000, 2))
    ks_cc = stats.kstest(_cauchy_upper(_cauchy_transform(u).mean(axis=1)), "uniform").pvalue
    ok = ks_lm > 0.01 and ks_cc > 0.01
    report(6, ok, f"KS p-value LM={ks_lm:.3f}, Cauchy={ks_cc:.3f}")
    assert ok


@pytest.mark.slow
def test_07_aj_ratio_limits(report):
    n = 23_400
    rng = np.random.default_rng(20260107)
    null, jump = [], []
    for _ in range(200):
        x = np.concatenate([[0.0], np.cumsum(0.4 * math.sqrt(1 / n) * rng.standard_normal(n))])
        null.append(aj_test(LogPricePath(x, 1 / n), AJ_FAST).statistic)
        x[rng.integers(1, n + 1) :] += 1.0
        jump.append(aj_test(LogPricePath(x, 1 / n), AJ_FAST).statistic)
    m0, m1 = float(np.median(null)), float(np.median(jump))
    ok = 1.9 <= m0 <= 2.1 and 0.95 <= m1 <= 1.05
    report(7, ok, f"median R null={m0:.4f}, dominant jump={m1:.4f}")
    assert ok


@pytest.mark.slow
def test_08_oracle_fixed_jump_normality(report):
    n, delta = 23_400, 1 / 23_400
    z = []
    for b in range(10):
        seeds = [derive_seed(20260108, 50 * b + j) for j in range(50)]
        X, V = simulate_heston_batch(HestonParams(), n, delta, seeds)
        for x, v, s in zip(X, V, seeds):
            tau = substream(s, "fixed-jump").uniform(0.0, 1.0)
            cell = max(int(math.ceil(tau / delta)), 1)
            x = x.copy()
            x[cell:] += 1.0
            spot = max(v[cell - 1], 1e-12)
            z.append(aj_oracle_fixed_stat(LogPricePath(x, delta), [JumpRecord(tau, 1.0)], [spot], AJ_FAST))
    z = np.array(z)
    sw = stats.shapiro(z).pvalue
    ks = stats.kstest(z, "norm").pvalue
    ok = sw > 0.01 and ks > 0.01
    report(8, ok, f"mean={z.mean():.3f} sd={z.std():.3f} Shapiro p={sw:.3f} KS(N(0,1)) p={ks:.3f}")
    assert ok


@pytest.mark.slow
def test_09_noiseless_size(report):
    R = 1000
    res = run_experiment(ExperimentConfig(design=Design.SIZE_NULL, grids=(5,), replications=R,
                                          base_seed=20260109, workers=WORKERS))
    lines, ok = [], True
    for label, target in (("AJ-2", 0.0446), ("LM", 0.0430), ("CC-2", 0.0420)):
        f = res.frequency(label)
        lo, hi = band(target, f, R)
        ok &= lo <= f <= hi
        lines.append(f"{label}={f:.4f} in [{lo:.4f}, {hi:.4f}]")
    report(9, ok, "; ".join(lines) + f"; failed={res.failed}")
    assert ok


@pytest.mark.slow
def test_10_sparse_power_ordering(report):
    res = run_experiment(ExperimentConfig(design=Design.SPARSE, grids=(1,), replications=200, base_seed=20260110,
                                          sim=SimulationSpec(alt_params=(2.5,), mark_variance=0.05), workers=WORKERS))
    aj, lm, cc = (res.frequency(m) for m in ("AJ-2", "LM", "CC-2"))
    ok = lm >= aj - 0.03 and cc >= max(aj, lm) - 0.06
    report(10, ok, f"AJ-2={aj:.3f} LM={lm:.3f} CC-2={cc:.3f} (reference 0.891 / 0.905 / 0.905)")
    assert ok


@pytest.mark.slow
def test_11_dense_power_adaptivity(report):
    res = run_experiment(ExperimentConfig(design=Design.DENSE, grids=(1,), replications=200, base_seed=20260111,
                                          sim=SimulationSpec(alt_params=(300.0,), mark_variance=1.0), workers=WORKERS))
    aj, lm, cc = (res.frequency(m) for m in ("AJ-2", "LM", "CC-2"))
    ok = cc >= max(aj, lm) - 0.05
    report(11, ok, f"AJ-2={aj:.3f} LM={lm:.3f} CC-2={cc:.3f} (reference 0.941 / 0.922 / 0.987)")
    assert ok


@pytest.mark.slow
def test_12_noisy_size_double_bootstrap(report):
    cfg = ExperimentConfig(design=Design.NOISY_SIZE, grids=(5,), replications=300, base_seed=20260112,
                           methods=(MethodSpec("LA"), MethodSpec("PA")), bootstrap=BootstrapConfig(b1=99, b2=49),
                           sim=SimulationSpec(noise="gaussian", q=0.005), b2_prefixes=(9, 19), workers=WORKERS)
    res = run_experiment(cfg)
    la, pa = res.frequency("LA"), res.frequency("PA")
    ok = 0.025 <= la <= 0.070 and 0.030 <= pa <= 0.085
    by_b2 = ", ".join(f"B2={b}: {res.frequency(f'LA@B2={b}'):.4f}" for b in cfg.b2_prefixes)
    report(12, ok, f"LA={la:.4f} in [0.025, 0.070] (reference 0.0452); PA={pa:.4f} in [0.030, 0.085] "
                   f"(reference 0.0550); LA by B2 prefix: {by_b2}; failed={res.failed}")
    assert ok


@pytest.mark.slow
def test_13_fixed_jump_consistency(report):
    res = run_experiment(ExperimentConfig(design=Design.FIXED, grids=(5,), replications=200, base_seed=20260113,
                                          sim=SimulationSpec(alt_params=(0.5,)), workers=WORKERS))
    cc = res.frequency("CC-2")
    report(13, cc >= 0.99, f"CC-2 rejection={cc:.3f} (need >= 0.99)")
    assert cc >= 0.99
