"""Sampling-error sweeps, scaling fits and their on-disk outputs.

A sweep fixes one scenario and velocity, computes a large-sample FGS
reference field per wave number, and then ``R`` independent FGS fields per
``(k, M)`` cell. Each record holds the energy-norm distance to the
reference; the summary reports the root mean square over repetitions.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, FGSError, InsufficientData
from .model import (ConstantVelocity, GaussianAmplitude, GaussianInitialData, Grid,
                    PolynomialGaussianAmplitude, QuadraticPhase, SineSumVelocity, WKBInitialData)
from .pipeline import FGSRun, rms
from .reconstruction import energy_norm_diff, write_field
from .sampling import derive_seed

log = logging.getLogger(__name__)

DEFAULT_REPETITIONS = 30
SWEEP_DT = 1e-4


@dataclass(frozen=True)
class Scenario:
    """A bundled numerical example: data family, box and default sweep lists."""

    name: str
    dim: int
    build: Callable
    lower: tuple
    upper: tuple
    k_values: tuple
    M_values: tuple
    M0: int
    t_final: float = 0.5
    sampler: str = "auto"
    wkb: bool = False
    description: str = ""

    def data(self, k):
        return self.build(float(k))

    def velocity(self, name="c1"):
        if name == "c1":
            return ConstantVelocity(1.0, self.dim)
        if name == "c2":
            return SineSumVelocity(1.0, 0.25, self.dim)
        raise ConfigError(f"unknown velocity {name!r}; use c1 or c2")

    def grid(self, k, ppw=8):
        return Grid.for_box(self.lower, self.upper, k, ppw)

    @property
    def compensation_power(self):
        """Exponent of k in the compensated series: d/4 for WKB data, 0 otherwise."""
        return self.dim / 4 if self.wkb else 0.0


def _gauss(d):
    return lambda k: GaussianInitialData(k, (0.0,) * d, (-1.0,) * d, (2.0,) * d)


def _wkb_gauss(d, width, center):
    return lambda k: WKBInitialData(k, GaussianAmplitude((width,) * d, (0.0,) * d),
                                    QuadraticPhase.centered((center,) * d))


def _wkb_poly(k):
    return WKBInitialData(k, PolynomialGaussianAmplitude((0.0, 0.0, 1.0), 50.0), QuadraticPhase.centered((0.5,)))


_P2 = tuple(2.0 ** j for j in range(13))
_M7 = (50, 100, 200, 400, 800, 1600, 3200)

SCENARIOS = {s.name: s for s in (
    Scenario("gauss-1d", 1, _gauss(1), (-1.0,), (1.0,), _P2[9:13], _M7, 150_000,
             description="1-D Gaussian packet moving left"),
    Scenario("gauss-2d", 2, _gauss(2), (-1.0,) * 2, (1.0,) * 2, _P2[8:12],
             (200, 400, 800, 1600, 3200, 6400, 12800), 200_000,
             description="2-D Gaussian packet"),
    Scenario("gauss-3d", 3, _gauss(3), (-1.0,) * 3, (1.0,) * 3, _P2[5:7], (800, 1600, 3200), 50_000,
             description="3-D Gaussian packet (reduced desk-scale defaults)"),
    Scenario("wkb-1d", 1, _wkb_gauss(1, 50.0, 0.5), (-1.0,), (1.0,), _P2[9:13], _M7, 150_000,
             wkb=True, description="1-D WKB data, Gaussian amplitude, linear phase gradient"),
    Scenario("wkb-poly-1d", 1, _wkb_poly, (-1.0,), (1.0,), _P2[9:13], _M7, 150_000,
             sampler="inverse_transform", wkb=True,
             description="1-D WKB data with an x^2-weighted Gaussian amplitude"),
    Scenario("wkb-2d", 2, _wkb_gauss(2, 50.0, 0.5), (-1.0,) * 2, (1.0,) * 2, _P2[8:12],
             (200, 400, 800, 1600, 3200, 6400, 12800), 200_000, wkb=True,
             description="2-D WKB data"),
    Scenario("wkb-3d", 3, _wkb_gauss(3, 5.0, 0.5), (-2.0,) * 3, (2.0,) * 3, _P2[4:6], (800, 1600, 3200), 50_000,
             wkb=True, description="3-D WKB data on a wider box (reduced desk-scale defaults)"),
)}


def get_scenario(name) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None


@dataclass
class SweepConfig:
    scenario: str
    velocity: str = "c1"
    k_values: Optional[list] = None
    M_values: Optional[list] = None
    repetitions: int = DEFAULT_REPETITIONS
    M0: Optional[int] = None
    seed: int = 0
    dt: float = SWEEP_DT
    t_final: Optional[float] = None
    momentum_sign: str = "hamiltonian"
    dump_fields: bool = False
    figures: bool = False

    def __post_init__(self):
        sc = get_scenario(self.scenario)
        self.k_values = [float(k) for k in (self.k_values or sc.k_values)]
        self.M_values = [int(m) for m in (self.M_values or sc.M_values)]
        self.M0 = int(self.M0 or sc.M0)
        self.t_final = float(sc.t_final if self.t_final is None else self.t_final)
        if self.repetitions < 2:
            raise ConfigError("at least two repetitions are needed")
        if self.M0 < 10 * max(self.M_values):
            raise ConfigError(f"reference size M0={self.M0} must be at least 10 x max(M)={max(self.M_values)}")
        sc.velocity(self.velocity)

    @classmethod
    def from_dict(cls, doc: dict):
        doc = dict(doc.get("config", doc))
        names = set(cls.__dataclass_fields__)
        return cls(**{key: v for key, v in doc.items() if key in names})

    def as_dict(self):
        return asdict(self)


@dataclass
class ErrorSweepRecord:
    scenario: str
    velocity: str
    k: float
    M: int
    repetition: int
    seed: int
    E_S: float
    dt_l2: float
    grad_l2: float
    t_sample: float = field(default=0.0, compare=False)
    t_evolve: float = field(default=0.0, compare=False)
    t_reconstruct: float = field(default=0.0, compare=False)


RECORD_COLUMNS = ["scenario", "velocity", "k", "M", "repetition", "seed", "E_S", "dt_l2", "grad_l2"]
TIMING_COLUMNS = ["k", "M", "repetition", "t_sample", "t_evolve", "t_reconstruct"]
SUMMARY_COLUMNS = ["scenario", "velocity", "k", "M", "count", "rms_E_S", "mean_E_S", "std_E_S",
                   "compensated", "rms_E_S_l2"]


@dataclass
class SweepResult:
    config: SweepConfig
    records: list
    summary: list
    reference_seeds: dict
    reference_timings: dict
    reference_fields: dict = field(default_factory=dict, repr=False)
    sample_fields: dict = field(default_factory=dict, repr=False)
    wall_time: float = 0.0


def trial_seed(base, scenario, velocity, k, M, rep):
    return derive_seed(base, "trial", scenario, velocity, float(k), int(M), int(rep))


def reference_seed(base, scenario, velocity, k):
    return derive_seed(base, "reference", scenario, velocity, float(k))


def summarize(records, compensation_power=0.0) -> list:
    """Per-(k, M) aggregates; independent of record order."""
    cells = {}
    for r in records:
        cells.setdefault((r.scenario, r.velocity, r.k, r.M), []).append(r)
    out = []
    for key in sorted(cells):
        rs = sorted(cells[key], key=lambda r: r.repetition)
        e = np.array([r.E_S for r in rs])
        l2 = np.array([math.hypot(r.dt_l2, r.grad_l2) / r.k for r in rs])
        val = rms(e)
        out.append({"scenario": key[0], "velocity": key[1], "k": key[2], "M": key[3], "count": len(rs),
                    "rms_E_S": val, "mean_E_S": float(np.mean(e)),
                    "std_E_S": float(np.std(e, ddof=1)) if len(rs) > 1 else 0.0,
                    "compensated": val / key[2] ** compensation_power, "rms_E_S_l2": rms(l2)})
    return out


def run_sweep(config: SweepConfig, progress: Optional[Callable] = None) -> SweepResult:
    """Reference per k, then ``R`` repetitions per (k, M)."""
    sc = get_scenario(config.scenario)
    vel = sc.velocity(config.velocity)
    records, ref_seeds, ref_times, ref_fields, sample_fields = [], {}, {}, {}, {}
    start = time.perf_counter()
    for k in config.k_values:
        run = FGSRun(sc.data(k), vel, sc.grid(k), config.t_final, config.dt, sc.sampler, config.momentum_sign)
        seed = reference_seed(config.seed, sc.name, config.velocity, k)
        ref_seeds[k] = seed
        try:
            ref, tm = run.field(config.M0, seed)
        except FGSError as exc:
            raise type(exc)(f"reference k={k:g}, M0={config.M0}: {exc}") from exc
        ref_times[k] = tm.as_dict()
        if config.dump_fields:
            ref_fields[k] = ref
        if progress:
            progress(f"k={k:g}: reference M0={config.M0} in {sum(tm.as_dict().values()):.1f}s")
        for M in config.M_values:
            for rep in range(config.repetitions):
                s = trial_seed(config.seed, sc.name, config.velocity, k, M, rep)
                try:
                    f, tm = run.field(M, s)
                except FGSError as exc:
                    raise type(exc)(f"k={k:g}, M={M}, repetition {rep}: {exc}") from exc
                e = energy_norm_diff(f, ref)
                records.append(ErrorSweepRecord(sc.name, config.velocity, float(k), int(M), rep, s,
                                                e.value, e.dt_l2, e.grad_l2, tm.sample, tm.evolve,
                                                tm.reconstruct))
                if config.dump_fields and rep == 0:
                    sample_fields[(k, M)] = f
            if progress:
                cell = [r.E_S for r in records if r.k == k and r.M == M]
                progress(f"k={k:g} M={M}: rms E_S = {rms(cell):.4e}")
    return SweepResult(config, records, summarize(records, sc.compensation_power), ref_seeds, ref_times,
                       ref_fields, sample_fields, time.perf_counter() - start)


@dataclass
class ScalingFit:
    axis: str
    fixed: float
    slope: float
    intercept: float
    r2: float
    x: list
    y: list
    compensated: list

    def ratio(self, series="y"):
        v = getattr(self, series)
        return max(v) / min(v)


def fit_scaling(summary, axis="M", fixed=None, compensation_power=0.0, column="rms_E_S") -> ScalingFit:
    """Least-squares fit of log(rms E_S) against log(axis) with the other variable fixed."""
    if axis not in ("M", "k"):
        raise ConfigError("axis must be 'M' or 'k'")
    other = "k" if axis == "M" else "M"
    rows = list(summary)
    if fixed is None:
        vals = sorted({r[other] for r in rows})
        if len(vals) != 1:
            raise ConfigError(f"several {other} values present; pass fixed=")
        fixed = vals[0]
    rows = sorted((r for r in rows if math.isclose(r[other], fixed)), key=lambda r: r[axis])
    if len({r[axis] for r in rows}) < 3:
        raise InsufficientData(f"need at least 3 distinct {axis} values, got {len(rows)}")
    x = np.array([float(r[axis]) for r in rows])
    y = np.array([float(r[column]) for r in rows])
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid ** 2) / ss) if ss > 0 else 1.0
    ks = x if axis == "k" else np.full_like(x, fixed)
    comp = y / ks ** compensation_power
    return ScalingFit(axis, float(fixed), float(slope), float(intercept), r2, x.tolist(), y.tolist(), comp.tolist())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def table_rows(summary):
    """Table layout: one row per k, one column per M, entries rms E_S."""
    ks = sorted({r["k"] for r in summary})
    Ms = sorted({r["M"] for r in summary})
    lookup = {(r["k"], r["M"]): r["rms_E_S"] for r in summary}
    return ["k"] + [str(m) for m in Ms], [[k] + [lookup.get((k, m), float("nan")) for m in Ms] for k in ks]


def _versions():
    import numba
    from . import __version__
    return {"fgs_wave": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__, "platform": platform.platform()}


def emit_outputs(result: SweepResult, out_dir) -> list:
    """Write records, summary, table, timings, manifest and optional dumps/figures."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    recs = sorted(result.records, key=lambda r: (r.k, r.M, r.repetition))
    _write_csv(out / "records.csv", RECORD_COLUMNS, [asdict(r) for r in recs])
    _write_csv(out / "timings.csv", TIMING_COLUMNS, [asdict(r) for r in recs])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, result.summary)
    head, rows = table_rows(result.summary)
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    paths += [out / n for n in ("records.csv", "timings.csv", "summary.csv", "table.csv")]
    manifest = {
        "config": result.config.as_dict(),
        "scenario": asdict_scenario(get_scenario(result.config.scenario)),
        "reference_seeds": {repr(k): s for k, s in result.reference_seeds.items()},
        "reference_timings": {repr(k): t for k, t in result.reference_timings.items()},
        "trial_seed_rule": "derive_seed(seed, 'trial', scenario, velocity, k, M, repetition)",
        "wall_time": result.wall_time,
        "versions": _versions(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    paths.append(out / "manifest.json")
    dumps = out / "fields"
    for k, f in result.reference_fields.items():
        paths += write_field(f, dumps, f"reference_k{int(k)}")
    for (k, M), f in result.sample_fields.items():
        paths += write_field(f, dumps, f"fgs_k{int(k)}_M{M}")
    if result.config.figures and result.summary:
        from .plotting import plot_sweep
        paths += plot_sweep(result.summary, out, get_scenario(result.config.scenario).compensation_power)
    return [Path(p) for p in paths]


def asdict_scenario(sc: Scenario) -> dict:
    return {"name": sc.name, "dim": sc.dim, "lower": list(sc.lower), "upper": list(sc.upper),
            "t_final": sc.t_final, "sampler": sc.sampler, "data": sc.data(sc.k_values[0]).describe(),
            "description": sc.description}
