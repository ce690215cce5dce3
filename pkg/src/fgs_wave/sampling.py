"""Importance densities on phase space and samplers for them.

Random numbers come from a counter-based generator (Philox) keyed by
``(seed, block)``, with fixed blocks of ``BLOCK`` consecutive sample indices.
A sample's value therefore depends only on the seed and its index, never on
how the batch is split or in what order blocks are produced.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (AssumptionViolated, CDFNotMonotone, ConfigError, NonInjectivePhase)
from .model import (GaussianAmplitude, GaussianInitialData, WKBInitialData, _tensor_gauss_legendre,
                    validate_initial_data)
from .rays import P_FLOOR

BLOCK = 4096
CDF_GRID_SIZE = 4096
SUPPORT_WIDTHS = 8.0

GAUSSIAN_DATA = "GaussianData"
WKB_GAUSSIAN = "WKBGaussianAmplitude"
WKB_INVERSE = "WKBInverseTransform"


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from an arbitrary tuple of ints and strings."""
    h = hashlib.blake2b(repr(tuple(parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


def _stream(seed, *key):
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), *key])
    return np.random.Generator(np.random.Philox(ss))


def counter_normals(seed, M, width, start=0):
    """Standard normals of shape ``(M, width)`` for sample indices ``start..start+M-1``."""
    return _counter_draw(seed, M, width, start, "normal")


def counter_uniforms(seed, M, width, start=0):
    return _counter_draw(seed, M, width, start, "uniform")


def _counter_draw(seed, M, width, start, kind):
    tag = 0 if kind == "normal" else 1
    out = np.empty((M, width))
    i = 0
    while i < M:
        idx = start + i
        b, off = divmod(idx, BLOCK)
        n = min(BLOCK - off, M - i)
        g = _stream(seed, tag, b)
        draw = g.standard_normal if tag == 0 else g.random
        block = draw((off + n, width))
        out[i:i + n] = block[off:]
        i += n
    return out


@dataclass
class DensitySpec:
    """A normalized density on phase space together with its sampler parameters."""

    kind: str
    dim: int
    k: float
    normalization: float
    evaluator: Callable
    params: dict = field(default_factory=dict)
    data: object = None

    def pdf(self, q, p):
        q = np.asarray(q, dtype=float).reshape(-1, self.dim)
        p = np.asarray(p, dtype=float).reshape(-1, self.dim)
        return self.evaluator(q, p)


@dataclass
class SampleBatch:
    q: np.ndarray
    p: np.ndarray
    pi: np.ndarray
    kind: str
    normalization: float
    seed: int
    rejections: int = 0

    def __len__(self):
        return self.q.shape[0]

    @property
    def dim(self):
        return self.q.shape[1]


# ---------------------------------------------------------------------------
# Gaussian packets
# ---------------------------------------------------------------------------

def density_gaussian(data: GaussianInitialData) -> DensitySpec:
    """Multivariate normal density matched to a Gaussian packet."""
    k = data.k
    d = data.dim
    qt = np.asarray(data.center)
    pt = np.asarray(data.momentum)
    a = np.asarray(data.widths)
    pref = (2 * math.pi) ** (-d) * k ** d * float(np.prod(np.sqrt(a) / (1 + a)))

    def pdf(q, p):
        expo = -np.sum(((pt - p) ** 2 + a * (qt - q) ** 2) * k / (2 * (1 + a)), axis=-1)
        return pref * np.exp(expo)

    Z = 2 ** (2 * d) * math.pi ** (5 * d / 4) * k ** (-5 * d / 4) * float(np.prod(np.sqrt((1 + a) / np.sqrt(a))))
    params = {"q_mean": qt, "p_mean": pt, "q_var": (1 + a) / (a * k), "p_var": (1 + a) / k}
    return DensitySpec(GAUSSIAN_DATA, d, k, Z, pdf, params, data)


def _resample_p(seed, p, draw):
    """Redraw rows with |p| <= P_FLOOR from a dedicated stream."""
    bad = np.flatnonzero(np.linalg.norm(p, axis=1) <= P_FLOOR)
    count = 0
    for i in bad:
        attempt = 0
        while np.linalg.norm(p[i]) <= P_FLOOR:
            g = _stream(seed, 7, int(i), attempt)
            p[i] = draw(g)
            attempt += 1
            count += 1
    return count


def sample_gaussian(spec: DensitySpec, M: int, seed: int) -> SampleBatch:
    """Independent draws from the Gaussian-data density."""
    if M < 1:
        raise ConfigError("M must be at least 1")
    d = spec.dim
    pr = spec.params
    z = counter_normals(seed, M, 2 * d)
    q = pr["q_mean"] + np.sqrt(pr["q_var"]) * z[:, :d]
    p = pr["p_mean"] + np.sqrt(pr["p_var"]) * z[:, d:]
    rej = _resample_p(seed, p, lambda g: pr["p_mean"] + np.sqrt(pr["p_var"]) * g.standard_normal(d))
    return SampleBatch(q, p, spec.pdf(q, p), spec.kind, spec.normalization, seed, rej)


# ---------------------------------------------------------------------------
# WKB data
# ---------------------------------------------------------------------------

def _abs_amplitude_integral(amp):
    if isinstance(amp, GaussianAmplitude):
        return amp.integral()
    c = np.asarray(amp.center, dtype=float).reshape(-1)
    sig = amp.sigma()
    n = {1: 400, 2: 120, 3: 48}[c.size]
    mesh, w = _tensor_gauss_legendre(c - 12 * sig, c + 12 * sig, n)
    return float(np.sum(w * np.abs(amp(mesh))))


def density_wkb(data: WKBInitialData) -> DensitySpec:
    """Stationary-phase density for WKB data.

    Raises AssumptionViolated when the phase Hessian determinant changes sign
    or vanishes on the amplitude support.
    """
    try:
        validate_initial_data(data)
    except NonInjectivePhase as exc:
        raise AssumptionViolated(str(exc)) from None
    k = data.k
    d = data.dim
    amp, phase = data.amplitude, data.phase
    Z = 2 ** (1.5 * d) * math.pi ** d * k ** (-d) * _abs_amplitude_integral(amp)
    pref = 2 ** d * math.pi ** (d / 2) * k ** (-d / 2) / Z

    def pdf(q, p):
        inside = phase.in_domain(p)
        out = np.zeros(q.shape[0])
        if not np.any(inside):
            return out
        y = phase.inverse(p[inside])
        det = np.abs(np.linalg.det(np.reshape(phase.hess(y), (-1, d, d))))
        dy = y - q[inside]
        out[inside] = pref * np.abs(amp(y)) * np.exp(-0.5 * k * np.sum(dy * dy, axis=-1)) / det
        return out

    params = {}
    if isinstance(amp, GaussianAmplitude):
        wa = np.asarray(amp.widths)
        params = {"center": np.asarray(amp.center), "widths": wa,
                  "sigma1": 1.0 / k + 1.0 / wa, "sigma2": 1.0 / (wa + k)}
    kind = WKB_GAUSSIAN if isinstance(amp, GaussianAmplitude) else WKB_INVERSE
    return DensitySpec(kind, d, k, Z, pdf, params, data)


def sample_wkb_gaussian_amplitude(spec: DensitySpec, M: int, seed: int) -> SampleBatch:
    """Two-stage normal sampler for Gaussian amplitudes."""
    if M < 1:
        raise ConfigError("M must be at least 1")
    if "sigma1" not in spec.params:
        raise AssumptionViolated("two-stage sampler needs a Gaussian amplitude")
    d, k = spec.dim, spec.k
    xc, wa = spec.params["center"], spec.params["widths"]
    z = counter_normals(seed, M, 2 * d)
    q = xc + np.sqrt(spec.params["sigma1"]) * z[:, :d]
    mu2 = (wa * xc + k * q) / (wa + k)
    y = mu2 + np.sqrt(spec.params["sigma2"]) * z[:, d:]
    phase = spec.data.phase
    p = np.reshape(phase.grad(y), (M, d))
    bad = np.linalg.norm(p, axis=1) <= P_FLOOR
    rej = 0
    for i in np.flatnonzero(bad):
        attempt = 0
        while np.linalg.norm(p[i]) <= P_FLOOR:
            g = _stream(seed, 7, int(i), attempt)
            yi = mu2[i] + np.sqrt(spec.params["sigma2"]) * g.standard_normal(d)
            p[i] = np.reshape(phase.grad(yi), d)
            attempt += 1
            rej += 1
    return SampleBatch(q, p, spec.pdf(q, p), WKB_GAUSSIAN, spec.normalization, seed, rej)


def inverse_cdf(grid, cdf, u):
    """Invert a tabulated non-decreasing CDF by bisection and linear interpolation."""
    j = np.clip(np.searchsorted(cdf, u, side="right"), 1, len(cdf) - 1)
    lo, hi = cdf[j - 1], cdf[j]
    span = np.where(hi > lo, hi - lo, 1.0)
    frac = np.where(hi > lo, (u - lo) / span, 0.5)
    return grid[j - 1] + frac * (grid[j] - grid[j - 1])


def _inverse_rows(grid, cdf, u):
    """Row-wise :func:`inverse_cdf` for 2-D tables."""
    n = cdf.shape[1]
    j = np.clip(np.sum(cdf <= u[:, None], axis=1), 1, n - 1)
    rows = np.arange(cdf.shape[0])
    lo, hi = cdf[rows, j - 1], cdf[rows, j]
    span = np.where(hi > lo, hi - lo, 1.0)
    frac = np.where(hi > lo, (u - lo) / span, 0.5)
    return grid[rows, j - 1] + frac * (grid[rows, j] - grid[rows, j - 1])


def _cumulative(vals, x):
    inc = 0.5 * (vals[..., 1:] + vals[..., :-1]) * np.diff(x, axis=-1)
    if np.any(inc < 0):
        raise CDFNotMonotone("negative CDF increment; increase the grid size")
    cdf = np.concatenate([np.zeros(vals.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)], axis=-1)
    total = cdf[..., -1:]
    if np.any(total <= 0):
        raise CDFNotMonotone("tabulated CDF has zero mass")
    return cdf / total


def marginal_q_table(data: WKBInitialData, cdf_grid_size=CDF_GRID_SIZE):
    """Grid and normalized CDF of the position marginal (one dimension)."""
    k = data.k
    amp = data.amplitude
    c = float(np.reshape(amp.center, -1)[0])
    sig = float(amp.sigma()[0])
    half = SUPPORT_WIDTHS * sig
    yg = np.linspace(c - half, c + half, 2 * cdf_grid_size + 1)
    ay = np.abs(amp(yg[:, None]))
    hy = yg[1] - yg[0]
    wy = np.full(yg.size, hy)
    wy[0] = wy[-1] = 0.5 * hy
    qg = np.linspace(c - half - SUPPORT_WIDTHS / math.sqrt(k), c + half + SUPPORT_WIDTHS / math.sqrt(k),
                     cdf_grid_size)
    dens = np.empty(qg.size)
    for s in range(0, qg.size, 256):
        blk = qg[s:s + 256, None]
        dens[s:s + 256] = np.exp(-0.5 * k * (yg[None, :] - blk) ** 2) @ (wy * ay)
    return qg, _cumulative(dens, qg)


def _conditional_y(amp, k, q, u, cdf_grid_size):
    """Invert the conditional CDF of the stationary point given each ``q``."""
    c = float(np.reshape(amp.center, -1)[0])
    half = SUPPORT_WIDTHS * float(amp.sigma()[0])
    r = SUPPORT_WIDTHS / math.sqrt(k)
    t = np.linspace(-1.0, 1.0, cdf_grid_size)
    y = np.empty(q.size)
    for s in range(0, q.size, 512):
        qs = q[s:s + 512, None]
        lo = np.maximum(qs - r, c - half)
        hi = np.minimum(qs + r, c + half)
        empty = hi <= lo
        lo = np.where(empty, qs - r, lo)
        hi = np.where(empty, qs + r, hi)
        ys = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t[None, :]
        dens = np.abs(amp(ys[..., None])) * np.exp(-0.5 * k * (ys - qs) ** 2)
        ccdf = _cumulative(dens, ys)
        y[s:s + 512] = _inverse_rows(ys, ccdf, u[s:s + 512])
    return y


def sample_wkb_inverse_transform(data: WKBInitialData, M: int, seed: int,
                                 cdf_grid_size: int = CDF_GRID_SIZE) -> SampleBatch:
    """Tabulated inverse-transform sampler for one-dimensional WKB data.

    The position marginal is tabulated on ``cdf_grid_size`` points spanning the
    amplitude support (8 widths) widened by the window; the conditional law of
    the stationary point ``y`` given ``q`` is tabulated per sample on the
    window ``q +- 8/sqrt(k)``.
    """
    if data.dim != 1:
        raise AssumptionViolated("inverse-transform sampling is one-dimensional")
    if M < 1:
        raise ConfigError("M must be at least 1")
    spec = density_wkb(data)
    k = data.k
    amp, phase = data.amplitude, data.phase
    qg, cdf = marginal_q_table(data, cdf_grid_size)
    u = counter_uniforms(seed, M, 2)
    q = inverse_cdf(qg, cdf, u[:, 0])
    y = _conditional_y(amp, k, q, u[:, 1], cdf_grid_size)
    p = np.reshape(phase.grad(y[:, None]), (M, 1))
    rej = 0
    for i in np.flatnonzero(np.abs(p[:, 0]) <= P_FLOOR):
        attempt = 0
        while abs(p[i, 0]) <= P_FLOOR:
            v = _stream(seed, 7, int(i), attempt).random(1)
            y[i] = _conditional_y(amp, k, q[i:i + 1], v, cdf_grid_size)[0]
            p[i, 0] = float(np.reshape(phase.grad(y[i:i + 1, None]), -1)[0])
            attempt += 1
            rej += 1
    qa = q[:, None]
    return SampleBatch(qa, p, spec.pdf(qa, p), WKB_INVERSE, spec.normalization, seed, rej)


def sample(data, M, seed, method: Optional[str] = None, cdf_grid_size=CDF_GRID_SIZE):
    """Draw a batch with the sampler appropriate for ``data``.

    Returns ``(spec, batch)``.
    """
    if isinstance(data, GaussianInitialData):
        spec = density_gaussian(data)
        return spec, sample_gaussian(spec, M, seed)
    spec = density_wkb(data)
    if method == "inverse_transform" or (method is None and spec.kind == WKB_INVERSE):
        return spec, sample_wkb_inverse_transform(data, M, seed, cdf_grid_size)
    return spec, sample_wkb_gaussian_amplitude(spec, M, seed)


PHASE_QUADRATURE = "PhaseSpaceQuadrature"


def phase_space_quadrature(spec: DensitySpec, nodes: int, widths=SUPPORT_WIDTHS) -> SampleBatch:
    """Deterministic tensor trapezoid nodes for the FGA phase-space integral.

    Nodes cover ``mean +- widths`` standard deviations of the Gaussian
    density in every phase-space coordinate. The returned ``pi`` is chosen
    so that the Monte Carlo estimator ``(1/M) sum Lambda`` equals the
    trapezoid sum, which makes ``reconstruct`` evaluate the FGA ansatz
    itself with no sampling noise. Cost grows as ``nodes**(2d)``, so this is
    meant for one-dimensional validation.
    """
    if spec.kind != GAUSSIAN_DATA:
        raise ConfigError("phase-space quadrature needs the Gaussian-data density")
    d = spec.dim
    centers = np.concatenate([spec.params["q_mean"], spec.params["p_mean"]])
    sds = np.sqrt(np.concatenate([spec.params["q_var"], spec.params["p_var"]]))
    axes = [c + s * np.linspace(-widths, widths, nodes) for c, s in zip(centers, sds)]
    cell = float(np.prod([ax[1] - ax[0] for ax in axes]))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * d)
    q, p = mesh[:, :d].copy(), mesh[:, d:].copy()
    keep = np.linalg.norm(p, axis=1) > P_FLOOR
    q, p = q[keep], p[keep]
    M = q.shape[0]
    return SampleBatch(q, p, np.full(M, 1.0 / (M * cell)), PHASE_QUADRATURE, spec.normalization, -1)
