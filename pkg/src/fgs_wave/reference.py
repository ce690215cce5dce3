"""Fourier pseudospectral reference solver and exact constant-speed solutions.

The first-order system ``u' = v``, ``v' = c(x)^2 Lap u`` is advanced with
classic RK4 on a periodic box; the Laplacian is applied in Fourier space and
multiplied by ``c^2`` in physical space. The box is padded around the data so
that nothing reaches its edge before ``t_final``; arrival at the edge is
detected and reported as :class:`DomainTooSmall`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import CFLViolation, ConfigError, DomainTooSmall
from .model import ConstantVelocity, GaussianInitialData, Grid, VelocityField, WKBInitialData
from .reconstruction import WaveField

log = logging.getLogger(__name__)

MAX_CFL = 0.5
DEFAULT_CFL = 0.25
# RK4 phase accuracy target: c_max * (data wave number) * dt
DEFAULT_PHASE_STEP = 5e-3
BOUNDARY_TOL = 1e-6
PAD_WAVELENGTHS = 4
SPECTRAL_PPW = 8


@dataclass
class SpectralState:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    t: float
    c: np.ndarray

    @property
    def c_max(self):
        return float(np.max(self.c))


def _wavenumbers(grid: Grid):
    out = []
    for lo, hi, n in zip(grid.lower, grid.upper, grid.shape):
        out.append(2 * np.pi * np.fft.fftfreq(n, d=(hi - lo) / n))
    return out


def _laplacian_symbol(grid: Grid):
    ks = _wavenumbers(grid)
    sym = np.zeros(grid.shape)
    for ax, kk in enumerate(ks):
        shape = [1] * grid.dim
        shape[ax] = kk.size
        sym = sym - (kk ** 2).reshape(shape)
    return sym


class _Operator:
    def __init__(self, state: SpectralState):
        self.sym = _laplacian_symbol(state.grid)
        self.c2 = state.c ** 2

    def __call__(self, u, v):
        return v, self.c2 * np.fft.ifftn(self.sym * np.fft.fftn(u))


def cfl_number(state: SpectralState, dt):
    return dt * state.c_max / min(state.grid.spacing)


def spectral_step(state: SpectralState, dt, _op=None) -> SpectralState:
    """One RK4 step; raises CFLViolation when ``dt c_max / h`` exceeds 0.5."""
    if cfl_number(state, dt) > MAX_CFL:
        raise CFLViolation(f"CFL number {cfl_number(state, dt):.3f} exceeds {MAX_CFL}")
    op = _op or _Operator(state)
    u, v = state.u, state.v
    k1 = op(u, v)
    k2 = op(u + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1])
    k3 = op(u + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1])
    k4 = op(u + dt * k3[0], v + dt * k3[1])
    un = u + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vn = v + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return replace(state, u=un, v=vn, t=state.t + dt)


def advance(state: SpectralState, t_final, dt) -> SpectralState:
    """Step to ``t_final`` with steps of at most ``dt`` (the last one shortened)."""
    n = int(math.ceil((t_final - state.t) / dt - 1e-9))
    if n <= 0:
        return state
    h = (t_final - state.t) / n
    op = _Operator(state)
    for _ in range(n):
        state = spectral_step(state, h, op)
    state.t = t_final
    return state


def spectral_energy(state: SpectralState):
    """Conserved energy ``int |v|^2 / c^2 + |grad u|^2 dx`` on the periodic box."""
    cell = float(np.prod(state.grid.spacing))
    U = np.fft.fftn(state.u)
    grad2 = np.zeros(state.grid.shape)
    for ax, kk in enumerate(_wavenumbers(state.grid)):
        shape = [1] * state.grid.dim
        shape[ax] = kk.size
        grad2 += np.abs(np.fft.ifftn(1j * kk.reshape(shape) * U)) ** 2
    return cell * float(np.sum(np.abs(state.v) ** 2 / state.c ** 2 + grad2))


def _data_support(data):
    """Per-axis box outside of which the initial data are below ~1e-14 of peak."""
    if isinstance(data, GaussianInitialData):
        r = 8.0 / np.sqrt(data.k * np.asarray(data.widths))
        c = np.asarray(data.center)
    elif isinstance(data, WKBInitialData):
        r = 8.0 * data.amplitude.sigma()
        c = data.support_center()
    else:
        raise ConfigError("unsupported initial data")
    return c - r, c + r


def _pow2(n):
    return 1 << max(int(n) - 1, 1).bit_length()


def reference_grid(data, field: VelocityField, t_final, analysis: Optional[Grid] = None,
                   ppw=SPECTRAL_PPW) -> Grid:
    """Periodic box holding the data, its propagation range and padding."""
    lo, hi = _data_support(data)
    c_max = _velocity_bound(field, data.dim)
    pad = c_max * t_final + PAD_WAVELENGTHS * 2 * math.pi / data.k
    lo, hi = lo - pad, hi + pad
    if analysis is not None:
        lo = np.minimum(lo, np.asarray(analysis.lower) - PAD_WAVELENGTHS * 2 * math.pi / data.k)
        hi = np.maximum(hi, np.asarray(analysis.upper) + PAD_WAVELENGTHS * 2 * math.pi / data.k)
    hmax = Grid.max_spacing(data.k, ppw)
    shape = tuple(max(32, _pow2(math.ceil((b - a) / hmax))) for a, b in zip(lo, hi))
    return Grid(tuple(lo), tuple(hi), shape, data.k, ppw, periodic=True)


def _velocity_bound(field, d):
    if isinstance(field, ConstantVelocity):
        return field.value
    if hasattr(field, "base") and hasattr(field, "amp"):
        return field.base + abs(field.amp)
    # user field: sample generously
    x = np.random.default_rng(0).uniform(-10, 10, size=(20000, d))
    return float(np.max(field.c(x)))


def initial_state(data, field: VelocityField, grid: Grid) -> SpectralState:
    x = grid.mesh()
    c = np.reshape(field.evaluate(x.reshape(-1, grid.dim))[0], grid.shape)
    return SpectralState(grid, np.asarray(data.f0(x), complex), np.asarray(data.f1(x), complex), 0.0, c)


def _eval_matrix(src: Grid, ax, pts):
    """Matrix evaluating the trigonometric interpolant along axis ``ax`` at ``pts``."""
    n = src.shape[ax]
    lo, hi = src.lower[ax], src.upper[ax]
    kk = 2 * np.pi * np.fft.fftfreq(n, d=(hi - lo) / n)
    E = np.exp(1j * np.outer(pts - lo, kk)) / n
    if n % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant is real for real data
        E[:, n // 2] = np.cos(np.pi * n * (pts - lo) / (hi - lo)) / n
    return E, kk


def interpolate(state: SpectralState, target: Grid):
    """Spectral interpolation of ``(u, v, grad u)`` onto ``target``."""
    src = state.grid
    axes = target.axes()
    mats = [_eval_matrix(src, ax, axes[ax]) for ax in range(src.dim)]

    def apply(F, deriv=None):
        out = F
        for ax, (E, kk) in enumerate(mats):
            M = E
            if deriv == ax:
                M = E * (1j * kk)[None, :]
                if src.shape[ax] % 2 == 0:
                    M[:, src.shape[ax] // 2] = 0.0
            out = np.moveaxis(np.tensordot(M, out, axes=([1], [ax])), 0, ax)
        return out

    U = np.fft.fftn(state.u)
    V = np.fft.fftn(state.v)
    u = apply(U)
    v = apply(V)
    grad = np.array([apply(U, deriv=ax) for ax in range(src.dim)])
    return u, v, grad


def check_boundary(state: SpectralState, tol=BOUNDARY_TOL):
    """Largest edge-to-peak ratio of ``u`` and ``du/dt``; raises DomainTooSmall above ``tol``."""
    worst = 0.0
    for arr in (state.u, state.v):
        peak = float(np.max(np.abs(arr)))
        if peak == 0:
            continue
        edge = max(float(np.max(np.abs(np.take(arr, [0, 1, -2, -1], axis=ax)))) for ax in range(arr.ndim))
        worst = max(worst, edge / peak)
    if worst > tol:
        raise DomainTooSmall(f"field at the box edge is {worst:.2e} of its peak at t={state.t:g}")
    return worst


@dataclass
class ReferenceConfig:
    data: object
    field: VelocityField
    t_final: float
    grid: Grid
    dt: Optional[float] = None
    ppw: float = SPECTRAL_PPW
    box: Optional[Grid] = None


def default_dt(data, field, box: Grid):
    """Time step: the CFL bound and an RK4 phase-accuracy bound, whichever is smaller."""
    c_max = _velocity_bound(field, data.dim)
    kmax = data.k * (1.0 + 8.0 / math.sqrt(data.k))
    return min(DEFAULT_CFL * min(box.spacing) / c_max, DEFAULT_PHASE_STEP / (c_max * kmax))


def solve_reference(config: ReferenceConfig) -> WaveField:
    """Spectral solution at ``t_final`` interpolated onto ``config.grid``."""
    data, field = config.data, config.field
    box = config.box or reference_grid(data, field, config.t_final, config.grid, config.ppw)
    state = initial_state(data, field, box)
    dt = config.dt or default_dt(data, field, box)
    log.info("spectral reference: box %s shape %s dt %.3g", box.lower, box.shape, dt)
    check_boundary(state)
    if config.t_final > 0:
        state = advance(state, config.t_final, dt)
        check_boundary(state)
    if config.t_final == 0 and config.grid.same_as(box):
        from .reconstruction import spectral_gradient
        return WaveField(config.grid, state.u.copy(), state.v.copy(), spectral_gradient(state.u, box),
                         {"k": float(data.k), "t": 0.0, "source": "spectral"})
    u, v, grad = interpolate(state, config.grid)
    return WaveField(config.grid, u, v, grad, {"k": float(data.k), "t": float(config.t_final),
                                               "source": "spectral", "box": box.describe(), "dt": dt})


def exact_constant_gaussian(data: GaussianInitialData, c, t, grid: Grid) -> WaveField:
    """Exact 1-D solution for constant speed (d'Alembert), with derivatives.

    For ``f0 = w0 h`` and ``f1 = w1 k h`` the solution is
    ``(F(x - ct) + F(x + ct))/2 + (G(x + ct) - G(x - ct)) / (2c)`` where
    ``F = f0`` and ``G' = f1``; ``G`` is an error function of complex argument,
    evaluated here by cumulative quadrature on a fine auxiliary grid.
    """
    if data.dim != 1:
        raise ConfigError("the d'Alembert solution is one-dimensional")
    x = grid.axes()[0]
    lo = min(x[0], data.center[0]) - c * t - 1.0
    hi = max(x[-1], data.center[0]) + c * t + 1.0
    n = int((hi - lo) * data.k * 4) + 1
    s = np.linspace(lo, hi, n)
    f1 = data.f1(s[:, None])
    G = np.concatenate([[0.0], np.cumsum(0.5 * (f1[1:] + f1[:-1]) * np.diff(s))])

    def Gat(y):
        return np.interp(y, s, G.real) + 1j * np.interp(y, s, G.imag)

    def F(y):
        return data.f0(y[:, None])

    def F1(y):
        return data.f1(y[:, None])

    def dF(y, eps=1e-7):
        return (F(y + eps) - F(y - eps)) / (2 * eps)

    u = 0.5 * (F(x - c * t) + F(x + c * t)) + (Gat(x + c * t) - Gat(x - c * t)) / (2 * c)
    ut = 0.5 * c * (dF(x + c * t) - dF(x - c * t)) + 0.5 * (F1(x + c * t) + F1(x - c * t))
    ux = 0.5 * (dF(x - c * t) + dF(x + c * t)) + (F1(x + c * t) - F1(x - c * t)) / (2 * c)
    return WaveField(grid, u, ut, ux[None], {"k": float(data.k), "t": t, "source": "exact"})
