"""Wavefield assembly from evolved samples, and the high-frequency energy norm.

Each sample contributes a frozen Gaussian

    Lambda(x) = (2 pi / k)^(-3d/2) (a psi / pi) exp(i k P.(x - Q) - k/2 |x - Q|^2)

together with its exact time derivative and gradient. The Gaussian factor is
separable, so the kernel builds one window of factors per axis and forms the
tensor product inside the cutoff ball ``|x - Q| <= cutoff / sqrt(k)``.

Accumulation order is fixed: the grid is split into tiles along the first
axis, each tile visits samples in index order, and partial sums over blocks of
``SUM_BLOCK`` consecutive samples are folded into the running total. Results
are identical for any number of threads.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import ConfigError, GridMismatch, GridTooCoarse
from .model import Grid
from .rays import Branch, TrajectoryBatch, TrajectoryState, ode_rhs

DEFAULT_CUTOFF = 8.0
SUM_BLOCK = 256
TILE_ROWS = 32


@dataclass
class WaveField:
    """``u``, ``du_dt`` and ``grad`` (leading axis = component) on a grid."""

    grid: Grid
    u: np.ndarray
    du_dt: np.ndarray
    grad: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shp = tuple(self.grid.shape)
        if self.u.shape != shp or self.du_dt.shape != shp:
            raise GridMismatch(f"field arrays {self.u.shape} do not match grid {shp}")
        if self.grad is not None and self.grad.shape != (self.grid.dim,) + shp:
            raise GridMismatch("gradient array does not match grid")

    @property
    def k(self):
        return self.meta.get("k", self.grid.k)

    def scaled(self, factor):
        g = None if self.grad is None else factor * self.grad
        return WaveField(self.grid, factor * self.u, factor * self.du_dt, g, dict(self.meta))

    def __sub__(self, other):
        _check_same(self, other)
        return WaveField(self.grid, self.u - other.u, self.du_dt - other.du_dt,
                         _grad_of(self) - _grad_of(other), {"k": self.k})

    def boundary_max(self):
        """Largest ``|u|`` on the boundary cells of the box (truncation diagnostic)."""
        vals = []
        for ax in range(self.u.ndim):
            vals.append(np.abs(np.take(self.u, [0, -1], axis=ax)).max())
        return float(max(vals))


@dataclass(frozen=True)
class EnergyNorm:
    value: float
    dt_l2: float
    grad_l2: float


def _check_same(f, g):
    if not f.grid.same_as(g.grid):
        raise GridMismatch("fields live on different grids")
    if not math.isclose(float(f.k), float(g.k), rel_tol=1e-12):
        raise GridMismatch(f"fields have different wave numbers {f.k} and {g.k}")


def spectral_gradient(u, grid: Grid):
    """Gradient by Fourier differentiation on a periodic grid."""
    if not grid.periodic:
        raise ConfigError("spectral differentiation needs a periodic grid")
    out = np.empty((grid.dim,) + u.shape, dtype=complex)
    U = np.fft.fftn(u)
    for ax, (lo, hi, n) in enumerate(zip(grid.lower, grid.upper, grid.shape)):
        xi = 2 * np.pi * np.fft.fftfreq(n, d=(hi - lo) / n)
        if n % 2 == 0:
            xi[n // 2] = 0.0
        shape = [1] * grid.dim
        shape[ax] = n
        out[ax] = np.fft.ifftn(1j * xi.reshape(shape) * U)
    return out


def _grad_of(f: WaveField):
    if f.grad is not None:
        return f.grad
    return spectral_gradient(f.u, f.grid)


def _l2(arr, weights):
    """Weighted L2 norm over the trailing grid axes of ``arr``."""
    w = weights[0]
    for extra in weights[1:]:
        w = np.multiply.outer(w, extra)
    return math.sqrt(float(np.sum(w * np.abs(arr) ** 2)))


def energy_norm(f: WaveField) -> EnergyNorm:
    """``(||du/dt||_L2 + ||grad u||_L2) / k`` by trapezoid (rectangle if periodic) quadrature."""
    w = f.grid.weights()
    a = _l2(f.du_dt, w)
    g = _grad_of(f)
    b = math.sqrt(sum(_l2(g[j], w) ** 2 for j in range(g.shape[0])))
    return EnergyNorm((a + b) / float(f.k), a, b)


def energy_norm_diff(f: WaveField, g: WaveField) -> EnergyNorm:
    _check_same(f, g)
    return energy_norm(f - g)


# ---------------------------------------------------------------------------
# single-sample terms
# ---------------------------------------------------------------------------

def lambda_terms(state: TrajectoryState, psi, pi_val, k, x, field_=None, rates=None,
                 momentum_sign="hamiltonian"):
    """Return ``(Lambda, dLambda/dt, grad Lambda)`` at the points ``x``.

    ``rates = (dQ/dt, dP/dt, da/dt)`` may be given directly; otherwise they are
    computed from ``field_`` with :func:`ode_rhs`.
    """
    if not pi_val > 0:
        raise ConfigError("density value must be positive")
    if hasattr(psi, "plus"):
        psi = psi[state.branch]
    if rates is None:
        if field_ is None:
            raise ConfigError("need either rates or a velocity field")
        Qd, Pd, ad, _ = ode_rhs(state, field_, momentum_sign)
    else:
        Qd, Pd, ad = rates
    d = state.dim
    x = np.asarray(x, dtype=float).reshape(-1, d)
    r = x - state.Q
    coef = (2 * math.pi / k) ** (-1.5 * d) * state.a * complex(psi) / float(pi_val)
    lam = coef * np.exp(1j * k * (r @ state.P) - 0.5 * k * np.sum(r * r, axis=1))
    rate = ad / state.a - 1j * k * float(state.P @ Qd) + r @ (1j * k * np.asarray(Pd) + k * np.asarray(Qd))
    dlam = lam * rate
    glam = lam[:, None] * (1j * k * state.P[None, :] - k * r)
    return lam, dlam, glam


# ---------------------------------------------------------------------------
# grid accumulation
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _window(q, r, lo, h, n):
    a = math.ceil((q - r - lo) / h - 1e-12)
    b = math.floor((q + r - lo) / h + 1e-12)
    if a < 0:
        a = 0
    if b > n - 1:
        b = n - 1
    return a, b


@numba.njit(cache=True, parallel=True)
def _accumulate(lows, hs, ns, Q, P, coef, alpha, beta, k, rad, tile_rows, block, out):
    """Fill out[0..4] = (u, du_dt, grad_0, grad_1, grad_2) on an (n0, n1, n2) grid."""
    M = Q.shape[0]
    n0, n1, n2 = ns[0], ns[1], ns[2]
    ntiles = (n0 + tile_rows - 1) // tile_rows
    rad2 = rad * rad
    for t in numba.prange(ntiles):
        r0 = t * tile_rows
        r1 = min(n0, r0 + tile_rows)
        rows = r1 - r0
        buf = np.zeros((5, rows, n1, n2), dtype=np.complex128)
        tot = np.zeros((5, rows, n1, n2), dtype=np.complex128)
        E1 = np.empty(n1, dtype=np.complex128)
        F1 = np.empty(n1, dtype=np.complex128)
        E2 = np.empty(n2, dtype=np.complex128)
        F2 = np.empty(n2, dtype=np.complex128)
        dirty = False
        cur_block = 0
        for m in range(M):
            if m // block != cur_block:
                if dirty:
                    for c in range(5):
                        for i in range(rows):
                            for j in range(n1):
                                for l in range(n2):
                                    tot[c, i, j, l] += buf[c, i, j, l]
                                    buf[c, i, j, l] = 0.0
                    dirty = False
                cur_block = m // block
            a0, b0 = _window(Q[m, 0], rad, lows[0], hs[0], n0)
            if a0 < r0:
                a0 = r0
            if b0 > r1 - 1:
                b0 = r1 - 1
            if a0 > b0:
                continue
            a1, b1 = _window(Q[m, 1], rad, lows[1], hs[1], n1)
            a2, b2 = _window(Q[m, 2], rad, lows[2], hs[2], n2)
            if a1 > b1 or a2 > b2:
                continue
            for j in range(a1, b1 + 1):
                x = lows[1] + j * hs[1] - Q[m, 1]
                E1[j] = np.exp(complex(-0.5 * k * x * x, k * P[m, 1] * x))
                F1[j] = x * E1[j]
            for l in range(a2, b2 + 1):
                x = lows[2] + l * hs[2] - Q[m, 2]
                E2[l] = np.exp(complex(-0.5 * k * x * x, k * P[m, 2] * x))
                F2[l] = x * E2[l]
            ikP0 = 1j * k * P[m, 0]
            ikP1 = 1j * k * P[m, 1]
            ikP2 = 1j * k * P[m, 2]
            for i in range(a0, b0 + 1):
                x0 = lows[0] + i * hs[0] - Q[m, 0]
                rem0 = rad2 - x0 * x0
                if rem0 < 0:
                    continue
                A = coef[m] * np.exp(complex(-0.5 * k * x0 * x0, k * P[m, 0] * x0))
                At = A * (alpha[m] + beta[m, 0] * x0)
                Ag0 = A * (ikP0 - k * x0)
                ii = i - r0
                for j in range(a1, b1 + 1):
                    x1 = lows[1] + j * hs[1] - Q[m, 1]
                    rem1 = rem0 - x1 * x1
                    if rem1 < 0:
                        continue
                    e1 = E1[j]
                    f1 = F1[j]
                    B = A * e1
                    Bt = At * e1 + A * beta[m, 1] * f1
                    Bg0 = Ag0 * e1
                    Bg1 = A * (ikP1 * e1 - k * f1)
                    Bg2 = B * ikP2
                    for l in range(a2, b2 + 1):
                        x2 = lows[2] + l * hs[2] - Q[m, 2]
                        if x2 * x2 > rem1:
                            continue
                        e2 = E2[l]
                        f2 = F2[l]
                        buf[0, ii, j, l] += B * e2
                        buf[1, ii, j, l] += Bt * e2 + B * beta[m, 2] * f2
                        buf[2, ii, j, l] += Bg0 * e2
                        buf[3, ii, j, l] += Bg1 * e2
                        buf[4, ii, j, l] += Bg2 * e2 - B * k * f2
            dirty = True
        for c in range(5):
            for i in range(rows):
                for j in range(n1):
                    for l in range(n2):
                        out[c, r0 + i, j, l] = tot[c, i, j, l] + buf[c, i, j, l]


def _check_grid(grid: Grid, k):
    hmax = Grid.max_spacing(k, grid.ppw)
    if any(h > hmax * (1 + 1e-12) for h in grid.spacing):
        raise GridTooCoarse(f"grid spacing {grid.spacing} too coarse for k={k} at {grid.ppw} points per wavelength")


def _branch_terms(batch: TrajectoryBatch, psi, pi, k):
    d = batch.dim
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    pi = np.asarray(pi, dtype=float).reshape(-1)
    if psi.size != len(batch) or pi.size != len(batch):
        raise ConfigError("psi and density values must align with the samples")
    if np.any(pi <= 0):
        raise ConfigError("density values must be positive")
    coef = (2 * math.pi / k) ** (-1.5 * d) * batch.a * psi / pi
    alpha = batch.adot / batch.a - 1j * k * np.sum(batch.P * batch.Qdot, axis=1)
    beta = 1j * k * batch.Pdot + k * batch.Qdot
    return coef, alpha, beta


def _pad3(arr, fill=0.0):
    out = np.full((arr.shape[0], 3), fill, dtype=arr.dtype)
    out[:, :arr.shape[1]] = arr
    return out


def accumulate(grid: Grid, k, Q, P, coef, alpha, beta, cutoff=DEFAULT_CUTOFF):
    """Sum the frozen Gaussians ``coef_j exp(...)`` and their derivatives on ``grid``.

    Returns an array of shape ``(2 + d, *grid.shape)`` holding the sums of
    ``Lambda``, ``dLambda/dt`` and the gradient components.
    """
    d = grid.dim
    lows = np.zeros(3)
    hs = np.ones(3)
    ns = np.ones(3, dtype=np.int64)
    lows[:d] = grid.lower
    hs[:d] = grid.spacing
    ns[:d] = grid.shape
    out = np.zeros((5, int(ns[0]), int(ns[1]), int(ns[2])), dtype=complex)
    if len(Q):
        _accumulate(lows, hs, ns, _pad3(np.asarray(Q, float)), _pad3(np.asarray(P, float)),
                    np.ascontiguousarray(coef, dtype=complex), np.ascontiguousarray(alpha, dtype=complex),
                    _pad3(np.asarray(beta, complex)), float(k), cutoff / math.sqrt(k),
                    TILE_ROWS, SUM_BLOCK, out)
    out = out[: 2 + d].reshape((2 + d,) + tuple(grid.shape))
    return out


def reconstruct(batches: dict, psis: dict, pis: dict, k, grid: Grid, cutoff_radius=DEFAULT_CUTOFF,
                meta: Optional[dict] = None) -> WaveField:
    """FGS wavefield: per-branch sample means of the frozen Gaussians.

    ``batches``, ``psis`` and ``pis`` are keyed by :class:`Branch` (or ``"+"``,
    ``"-"``); each branch is averaged over its own sample count.
    """
    _check_grid(grid, k)
    total = None
    info = {"k": float(k), "branches": {}}
    t = None
    for key, batch in batches.items():
        br = Branch.parse(key)
        psi = _lookup(psis, br)
        pi = _lookup(pis, br)
        if t is not None and not math.isclose(batch.t, t, rel_tol=0, abs_tol=1e-12):
            raise ConfigError("all trajectories must be evolved to the same time")
        t = batch.t
        coef, alpha, beta = _branch_terms(batch, psi, pi, k)
        acc = accumulate(grid, k, batch.Q, batch.P, coef / max(len(batch), 1), alpha, beta, cutoff_radius)
        total = acc if total is None else total + acc
        info["branches"][br.label] = len(batch)
    if total is None:
        raise ConfigError("no trajectory batches given")
    info["t"] = t
    if meta:
        info.update(meta)
    return WaveField(grid, total[0], total[1], total[2:], info)


def _lookup(mapping, br):
    for key in (br, int(br), br.label):
        if key in mapping:
            return mapping[key]
    raise ConfigError(f"missing entry for branch {br.label}")


# ---------------------------------------------------------------------------
# grid dumps
# ---------------------------------------------------------------------------

def _component_names(f: WaveField):
    names = [("u", f.u), ("du_dt", f.du_dt)]
    if f.grad is not None:
        names += [(f"grad_{j}", f.grad[j]) for j in range(f.grad.shape[0])]
    return names


def write_field(f: WaveField, out_dir, stem) -> list:
    """Write each component as raw little-endian (Re, Im) float64 pairs plus a JSON sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, arr in _component_names(f):
        base = os.path.join(out_dir, f"{stem}.{name}")
        inter = np.empty(arr.shape + (2,), dtype="<f8")
        inter[..., 0] = arr.real
        inter[..., 1] = arr.imag
        inter.tofile(base + ".bin")
        side = {"field": name, "grid": f.grid.describe(), "dtype": "<f8", "layout": "row-major (re, im)",
                "k": float(f.k)}
        side.update({key: _jsonable(v) for key, v in f.meta.items() if key != "k"})
        with open(base + ".json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
        paths.append(base + ".bin")
    return paths


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _read_component(base):
    with open(base + ".json") as fh:
        side = json.load(fh)
    g = side["grid"]
    grid = Grid(g["lower"], g["upper"], g["shape"], g["k"], g.get("ppw", 8), g.get("periodic", False))
    raw = np.fromfile(base + ".bin", dtype="<f8")
    if raw.size != 2 * int(np.prod(grid.shape)):
        raise GridMismatch(f"{base}.bin has {raw.size} values, expected {2 * int(np.prod(grid.shape))}")
    raw = raw.reshape(tuple(grid.shape) + (2,))
    return grid, raw[..., 0] + 1j * raw[..., 1], side


def read_field(path) -> WaveField:
    """Load a dump written by :func:`write_field`; ``path`` may name any of its files."""
    stem = path
    for suffix in (".bin", ".json"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    for name in ("u", "du_dt") + tuple(f"grad_{j}" for j in range(3)):
        if stem.endswith("." + name):
            stem = stem[: -len(name) - 1]
            break
    grid, u, side = _read_component(stem + ".u")
    _, ut, _ = _read_component(stem + ".du_dt")
    grads = []
    for j in range(grid.dim):
        if not os.path.exists(f"{stem}.grad_{j}.bin"):
            grads = None
            break
        grads.append(_read_component(f"{stem}.grad_{j}")[1])
    meta = {key: v for key, v in side.items() if key not in ("field", "grid", "dtype", "layout")}
    return WaveField(grid, u, ut, None if grads is None else np.array(grads), meta)
