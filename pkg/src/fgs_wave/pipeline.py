"""End-to-end FGS run: sample, evolve both branches, weight, reconstruct."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decomposition import psi_values
from .errors import ConfigError
from .model import GaussianInitialData, Grid, VelocityField
from .rays import DEFAULT_DT, Branch, evolve_batch
from .reconstruction import DEFAULT_CUTOFF, WaveField, reconstruct
from .sampling import (DensitySpec, SampleBatch, density_gaussian, density_wkb, derive_seed,
                       phase_space_quadrature, sample_gaussian, sample_wkb_gaussian_amplitude,
                       sample_wkb_inverse_transform)

SAMPLERS = ("auto", "gaussian", "wkb_gaussian", "inverse_transform")


@dataclass
class Timings:
    sample: float = 0.0
    evolve: float = 0.0
    reconstruct: float = 0.0

    def as_dict(self):
        return {"sample": self.sample, "evolve": self.evolve, "reconstruct": self.reconstruct}


@dataclass
class FGSRun:
    """Shared setup for repeated FGS reconstructions of one problem."""

    data: object
    velocity: VelocityField
    grid: Grid
    t_final: float
    dt: float = DEFAULT_DT
    sampler: str = "auto"
    momentum_sign: str = "hamiltonian"
    cutoff_radius: float = DEFAULT_CUTOFF
    _spec: Optional[DensitySpec] = field(default=None, repr=False)

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.data.dim != self.velocity.dim or self.data.dim != self.grid.dim:
            raise ConfigError("data, velocity and grid dimensions differ")

    @property
    def spec(self) -> DensitySpec:
        if self._spec is None:
            gauss = isinstance(self.data, GaussianInitialData)
            if gauss and self.sampler not in ("auto", "gaussian"):
                raise ConfigError(f"sampler {self.sampler!r} does not apply to Gaussian data")
            if not gauss and self.sampler == "gaussian":
                raise ConfigError("the Gaussian-data sampler needs Gaussian data")
            self._spec = density_gaussian(self.data) if gauss else density_wkb(self.data)
        return self._spec

    def draw(self, M: int, seed: int) -> SampleBatch:
        spec = self.spec
        if isinstance(self.data, GaussianInitialData):
            return sample_gaussian(spec, M, seed)
        use_inverse = self.sampler == "inverse_transform" or (self.sampler == "auto" and "sigma1" not in spec.params)
        if use_inverse:
            return sample_wkb_inverse_transform(self.data, M, seed)
        return sample_wkb_gaussian_amplitude(spec, M, seed)

    def field_from_batches(self, batches: dict, meta: Optional[dict] = None, timings: Optional[Timings] = None):
        """Evolve and reconstruct from per-branch initial samples."""
        timings = timings or Timings()
        evolved, psis, pis = {}, {}, {}
        for br, b in batches.items():
            t0 = time.perf_counter()
            evolved[br] = evolve_batch(b.q, b.p, br, self.velocity, self.t_final, self.dt, self.momentum_sign)
            timings.evolve += time.perf_counter() - t0
            t0 = time.perf_counter()
            psis[br] = psi_values(self.data, self.velocity, (b.q, b.p))[br]
            pis[br] = b.pi
            timings.sample += time.perf_counter() - t0
        t0 = time.perf_counter()
        f = reconstruct(evolved, psis, pis, self.data.k, self.grid, self.cutoff_radius, meta)
        timings.reconstruct += time.perf_counter() - t0
        return f, timings

    def field(self, M: int, seed: int) -> tuple[WaveField, Timings]:
        """FGS field from ``M`` independent samples per branch.

        The two branch batches use streams derived from ``seed`` and the branch
        sign, so they are independent of each other.
        """
        timings = Timings()
        batches = {}
        for br in (Branch.PLUS, Branch.MINUS):
            t0 = time.perf_counter()
            batches[br] = self.draw(M, derive_seed(seed, int(br)))
            timings.sample += time.perf_counter() - t0
        meta = {"M": int(M), "seed": int(seed), "t": float(self.t_final), "source": "fgs"}
        return self.field_from_batches(batches, meta, timings)

    def quadrature_field(self, nodes: int) -> WaveField:
        """FGA ansatz by deterministic phase-space quadrature (Gaussian data)."""
        b = phase_space_quadrature(self.spec, nodes)
        meta = {"M": int(len(b)), "seed": -1, "t": float(self.t_final), "source": "fga-quadrature"}
        return self.field_from_batches({Branch.PLUS: b, Branch.MINUS: b}, meta)[0]


def from_run_config(cfg) -> FGSRun:
    return FGSRun(cfg.data, cfg.velocity, cfg.grid, cfg.t_final, cfg.dt, cfg.sampler,
                  cfg.momentum_sign, cfg.cutoff_radius)


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v * v))) if v.size else float("nan")
