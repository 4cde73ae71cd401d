"""Monte Carlo experiments: simulate days, run the tests, tabulate rejections.

Replication ``r`` depends only on ``derive_seed(base_seed, r)``, so results
are identical for any worker count or chunking.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from jumplab.calibrate import BootstrapConfig, double_bootstrap_decision, lm_bootstrap_pvalue
from jumplab.errors import InvalidArgument, JumpLabError
from jumplab.frictionless import AjConfig, LmConfig, aj_test, cc_test, lm_test
from jumplab.model import LogPricePath, MarkLaw, ObservedPath, aggregate_last_tick
from jumplab.noise import LaConfig, PaConfig, ccn_test, la_test, pa_test
from jumplab.rng import derive_seed, substream
from jumplab.simulate import (
    HestonParams,
    JumpSpec,
    NoiseKind,
    NoiseSpec,
    attach_jumps,
    attach_noise,
    simulate_heston_batch,
)

STEPS_PER_DAY = 23_400
RESULT_COLUMNS = [
    "design",
    "grid_seconds",
    "method",
    "alt_param",
    "level",
    "rejection_frequency",
    "replications",
    "mc_std_error",
    "failed",
]
# replications simulated together in one vectorized Euler batch
SIM_BATCH = 20


class Design(str, enum.Enum):
    SIZE_NULL = "SIZE_NULL"
    DENSE = "DENSE"
    SPARSE = "SPARSE"
    FIXED = "FIXED"
    NOISY_SIZE = "NOISY_SIZE"
    NOISY_DENSE = "NOISY_DENSE"
    NOISY_SPARSE = "NOISY_SPARSE"

    @property
    def noisy(self) -> bool:
        return self.value.startswith("NOISY")

    @property
    def null(self) -> bool:
        return self in (Design.SIZE_NULL, Design.NOISY_SIZE)


@dataclass(frozen=True)
class MethodSpec:
    """One test to run.

    ``name`` is AJ, LM, CC, PA, LA or CCN. ``calibration`` is ``"bootstrap"``
    or ``"asymptotic"`` and only matters for LM and LA (and the combinations
    built on them).
    """

    name: str
    k: int = 2
    p: float = 4.0
    calibration: str = "bootstrap"

    def __post_init__(self):
        name = self.name.upper()
        object.__setattr__(self, "name", name)
        if name not in {"AJ", "LM", "CC", "PA", "LA", "CCN"}:
            raise InvalidArgument(f"unknown method {self.name!r}")
        if self.calibration not in {"bootstrap", "asymptotic"}:
            raise InvalidArgument(f"unknown calibration {self.calibration!r}")

    @property
    def label(self) -> str:
        return f"{self.name}-{self.k}" if self.name in {"AJ", "CC"} else self.name

    @classmethod
    def parse(cls, item: str | Mapping) -> "MethodSpec":
        if isinstance(item, str):
            name, _, k = item.partition("-")
            return cls(name, int(k)) if k else cls(name)
        return cls(**item)


@dataclass(frozen=True)
class SimulationSpec:
    heston: HestonParams = HestonParams()
    days: int | None = None
    alt_params: tuple[float, ...] = ()
    mark_variance: float = 1.0
    noise: str = "gaussian"
    q: float = 0.005
    # FIXED design: jump time as a fraction of the horizon; None draws it uniformly
    fixed_jump_time: float | None = 0.5

    def __post_init__(self):
        if self.fixed_jump_time is not None and not 0 < self.fixed_jump_time <= 1:
            raise InvalidArgument("fixed_jump_time must lie in (0, 1]")

    def resolved_days(self, design: Design) -> int:
        if self.days is not None:
            return int(self.days)
        return 5 if design.noisy else 1


@dataclass(frozen=True)
class ExperimentConfig:
    design: Design = Design.SIZE_NULL
    grids: tuple[int, ...] = (5,)
    methods: tuple[MethodSpec, ...] = (MethodSpec("AJ"), MethodSpec("LM"), MethodSpec("CC"))
    replications: int = 100
    levels: tuple[float, ...] = (0.05,)
    sim: SimulationSpec = SimulationSpec()
    bootstrap: BootstrapConfig = BootstrapConfig()
    base_seed: int = 20260101
    pa_k: int = 100
    pa_r: int = 1000
    la_lam: float = 0.125
    lm_window: int | None = None
    kernel_mc_paths: int = 10_000_000
    workers: int = 1
    # extra rows "LA@B2=m" re-deciding the double bootstrap with its first m inner resamples
    b2_prefixes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        if int(self.replications) != self.replications or self.replications < 1:
            raise InvalidArgument("replications must be a positive integer")
        if not self.levels or not all(0 < a < 1 for a in self.levels):
            raise InvalidArgument("levels must be a nonempty subset of (0, 1)")
        if not self.grids or any(int(g) != g or g < 1 for g in self.grids):
            raise InvalidArgument("grids must be positive integers (seconds)")
        if not self.methods:
            raise InvalidArgument("at least one method is required")
        if not self.design.null and not self.sim.alt_params:
            raise InvalidArgument(f"design {self.design.value} needs sim.alt_params")
        if self.workers < 1:
            raise InvalidArgument("workers must be positive")
        if any(not 1 <= m <= self.bootstrap.b2 for m in self.b2_prefixes):
            raise InvalidArgument("b2_prefixes must lie in 1..bootstrap.b2")

    def labels(self) -> list[str]:
        """Table row labels: one per method, plus B2-prefix rows for bootstrapped LA."""
        out = []
        for m in self.methods:
            out.append(m.label)
            if m.name == "LA" and m.calibration == "bootstrap":
                out.extend(f"{m.label}@B2={b}" for b in self.b2_prefixes)
        return out

    @property
    def alt_params(self) -> tuple[float, ...]:
        return (0.0,) if self.design.null else tuple(float(a) for a in self.sim.alt_params)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        if "methods" in d:
            d["methods"] = tuple(MethodSpec.parse(m) for m in d["methods"])
        if "sim" in d:
            sim = dict(d["sim"])
            if "heston" in sim:
                sim["heston"] = HestonParams(**sim["heston"])
            if "alt_params" in sim:
                sim["alt_params"] = tuple(sim["alt_params"])
            d["sim"] = SimulationSpec(**sim)
        if "bootstrap" in d:
            d["bootstrap"] = BootstrapConfig(**d["bootstrap"])
        for key in ("grids", "levels", "b2_prefixes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["design"] = self.design.value
        return d


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    table: pd.DataFrame
    config: ExperimentConfig
    failed: int
    elapsed_seconds: float = 0.0

    def frequency(self, method: str, grid: int | None = None, alt: float | None = None, level: float | None = None) -> float:
        t = self.table
        mask = t["method"] == method
        if grid is not None:
            mask &= t["grid_seconds"] == grid
        if alt is not None:
            mask &= np.isclose(t["alt_param"], alt)
        if level is not None:
            mask &= np.isclose(t["level"], level)
        rows = t[mask]
        if len(rows) != 1:
            raise InvalidArgument(f"selection matched {len(rows)} rows")
        return float(rows["rejection_frequency"].iloc[0])


def _jump_spec(cfg: ExperimentConfig, alt: float) -> JumpSpec:
    design = cfg.design
    if design in (Design.DENSE, Design.NOISY_DENSE):
        return JumpSpec.dense(alt, MarkLaw.normal(cfg.sim.mark_variance))
    if design in (Design.SPARSE, Design.NOISY_SPARSE):
        return JumpSpec.sparse(alt, MarkLaw.normal(cfg.sim.mark_variance))
    return JumpSpec.none()


def _fixed_jump(X: LogPricePath, size: float, seed: int, when: float | None) -> LogPricePath:
    """One jump of ``size`` at ``when * horizon`` (uniform if None), placed in its right-closed interval."""
    if when is None:
        tau = substream(seed, "jumps", "fixed").uniform(0.0, X.horizon)
    else:
        tau = when * X.horizon
    cell = min(max(int(math.ceil(tau / X.delta)), 1), X.n)
    values = X.values.copy()
    values[cell:] += size
    return type(X)(values, X.delta, X.horizon, X.dropped)


def _decisions(cfg: ExperimentConfig, path: LogPricePath, seed: int) -> dict[str, list[bool]]:
    """Rejection flags per method label, one per level."""
    reports: dict[str, Any] = {}
    pvals: dict[str, float] = {}
    lm_cfg = LmConfig(window=cfg.lm_window)

    def lm_p(calibration: str) -> float:
        key = f"LM/{calibration}"
        if key not in pvals:
            rep = lm_test(path, lm_cfg)
            reports["LM"] = rep
            if calibration == "bootstrap":
                bs = dataclasses.replace(cfg.bootstrap, seed=derive_seed(seed, "lm-bootstrap"))
                pvals[key] = lm_bootstrap_pvalue(path, lm_cfg, bs)
            else:
                pvals[key] = rep.pvalue
        return pvals[key]

    def aj(m: MethodSpec):
        key = f"AJ-{m.k}-{m.p}"
        if key not in reports:
            reports[key] = aj_test(path, AjConfig(p=m.p, k=m.k, kernel_mc_paths=cfg.kernel_mc_paths))
        return reports[key]

    def pa():
        if "PA" not in reports:
            reports["PA"] = pa_test(path, PaConfig(cfg.pa_k, cfg.pa_r))
        return reports["PA"]

    def la(calibration: str):
        key = f"LA/{calibration}"
        if key not in reports:
            la_cfg = LaConfig.default(path.delta, lam=cfg.la_lam)
            if calibration == "bootstrap":
                bs = dataclasses.replace(cfg.bootstrap, seed=derive_seed(seed, "double-bootstrap"))
                reports[key] = double_bootstrap_decision(path, la_cfg, bs)
            else:
                reports[key] = la_test(path, la_cfg)
        return reports[key]

    out: dict[str, list[bool]] = {}
    for m in cfg.methods:
        if m.name == "AJ":
            p = aj(m).pvalue
        elif m.name == "LM":
            p = lm_p(m.calibration)
        elif m.name == "CC":
            p = cc_test(aj(m), lm_test(path, lm_cfg), lm_pvalue=lm_p(m.calibration)).pvalue
        elif m.name == "PA":
            p = pa().pvalue
        elif m.name == "LA":
            res = la(m.calibration)
            if m.calibration == "bootstrap":
                out[m.label] = [res.decision(a) for a in cfg.levels]
                for b in cfg.b2_prefixes:
                    out[f"{m.label}@B2={b}"] = [res.decision(a, b) for a in cfg.levels]
                continue
            p = res.pvalue
        else:
            res = la(m.calibration)
            if m.calibration == "bootstrap":
                p = ccn_test(pa(), la_test(path, LaConfig.default(path.delta, lam=cfg.la_lam)), la_pvalue=res.adjusted_pvalue).pvalue
            else:
                p = ccn_test(pa(), res).pvalue
        out[m.label] = [p <= a for a in cfg.levels]
    return out


def _observed(cfg: ExperimentConfig, X: LogPricePath, V: np.ndarray, grid: int, alt: float, seed: int) -> LogPricePath:
    Xg = aggregate_last_tick(X, grid)
    if cfg.design is Design.FIXED:
        return _fixed_jump(Xg, alt, seed, cfg.sim.fixed_jump_time)
    Vg = V[: Xg.n * grid + 1 : grid]
    Xj, _ = attach_jumps(Xg, Vg, _jump_spec(cfg, alt), seed)
    if cfg.design.noisy:
        return attach_noise(Xj, NoiseSpec(NoiseKind(cfg.sim.noise), cfg.sim.q), seed)
    return Xj


def run_replications(cfg: ExperimentConfig, indices: Sequence[int]) -> list[dict]:
    """Outcomes for the given replication indices, in order.

    Each outcome maps ``(grid, alt)`` to either ``{label: [flags]}`` or the
    error text of a failed evaluation.
    """
    days = cfg.sim.resolved_days(cfg.design)
    n = days * STEPS_PER_DAY
    delta = 1.0 / STEPS_PER_DAY
    outcomes = []
    for start in range(0, len(indices), SIM_BATCH):
        batch = list(indices[start : start + SIM_BATCH])
        seeds = [derive_seed(cfg.base_seed, r) for r in batch]
        Xs, Vs = simulate_heston_batch(cfg.sim.heston, n, delta, seeds)
        for r, seed, x, v in zip(batch, seeds, Xs, Vs):
            X = LogPricePath(x, delta)
            cells = {}
            for g in cfg.grids:
                for a_idx, alt in enumerate(cfg.alt_params):
                    try:
                        path = _observed(cfg, X, v, g, alt, seed)
                        cells[(g, a_idx)] = _decisions(cfg, path, derive_seed(seed, "tests", g, a_idx))
                    except (JumpLabError, ArithmeticError, ValueError) as exc:
                        cells[(g, a_idx)] = f"{type(exc).__name__}: {exc}"
            outcomes.append({"replication": r, "cells": cells})
    return outcomes


def _tabulate(cfg: ExperimentConfig, outcomes: list[dict]) -> tuple[pd.DataFrame, int]:
    rows = []
    failed_total = 0
    for g in cfg.grids:
        for a_idx, alt in enumerate(cfg.alt_params):
            cells = [o["cells"][(g, a_idx)] for o in outcomes]
            good = [c for c in cells if isinstance(c, dict)]
            failed = len(cells) - len(good)
            failed_total += failed
            R = len(good)
            for label in cfg.labels():
                for l_idx, level in enumerate(cfg.levels):
                    if R:
                        f = sum(c[label][l_idx] for c in good) / R
                        se = math.sqrt(f * (1 - f) / R)
                    else:
                        f = se = float("nan")
                    rows.append([cfg.design.value, g, label, alt, level, f, R, se, failed])
    return pd.DataFrame(rows, columns=RESULT_COLUMNS), failed_total


def resolve_workers(requested: int) -> int:
    cap = os.environ.get("JUMPLAB_WORKERS")
    workers = max(1, int(requested))
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every replication and tabulate rejection frequencies."""
    t0 = time.perf_counter()
    workers = resolve_workers(cfg.workers)
    indices = list(range(cfg.replications))
    if workers == 1:
        outcomes = run_replications(cfg, indices)
    else:
        size = max(1, math.ceil(len(indices) / (4 * workers)))
        chunks = [indices[i : i + size] for i in range(0, len(indices), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_replications, [cfg] * len(chunks), chunks))
        outcomes = sorted((o for part in parts for o in part), key=lambda o: o["replication"])
    table, failed = _tabulate(cfg, outcomes)
    return ExperimentResult(table, cfg, failed, time.perf_counter() - t0)


def write_result(result: ExperimentResult, out: str | Path) -> Path:
    """Write the CSV and a sidecar ``<out>.json`` with the config and code version."""
    from jumplab import __version__

    out = Path(out)
    result.table.to_csv(out, index=False, columns=RESULT_COLUMNS)
    sidecar = out.with_suffix(out.suffix + ".json")
    meta = {
        "config": result.config.to_dict(),
        "code_version": __version__,
        "failed_replications": result.failed,
        "elapsed_seconds": result.elapsed_seconds,
    }
    sidecar.write_text(json.dumps(meta, indent=2, default=str), encoding="utf-8")
    return sidecar
