"""Domain vocabulary: velocity fields, initial data and spatial grids.

All objects here are immutable after construction. Evaluators take points as
arrays of shape ``(..., d)`` and broadcast over the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import (AssumptionViolated, ConfigError, GridTooCoarse,
                     NonInjectivePhase, NonPositiveVelocity, NotNormalized)

FD_STEP = 1e-5
DEFAULT_PPW = 8
MIN_GRID_POINTS = 32

# numba kernel codes for the built-in velocity fields
KIND_CONSTANT = 0
KIND_SINE_SUM = 1


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != d:
        raise ConfigError(f"expected points with trailing dimension {d}, got shape {x.shape}")
    return x


class PhasePoint(NamedTuple):
    """A point ``(q, p)`` of phase space."""

    q: np.ndarray
    p: np.ndarray


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------

class VelocityField:
    """Positive scalar sound speed c(x) with analytic gradient and Hessian."""

    kind = "custom"
    dim: int
    c_inf: float

    def c(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def kernel_spec(self):
        """``(kind_code, params)`` for the compiled kernels, or None."""
        return None

    def describe(self) -> dict:
        return {"kind": self.kind}

    def evaluate(self, x):
        x = _as_points(x, self.dim)
        c = self.c(x)
        if np.any(~np.isfinite(c)) or np.any(c <= 0.0):
            raise NonPositiveVelocity(f"velocity not positive: min c = {np.min(c)!r}")
        if np.any(c < self.c_inf * (1.0 - 1e-12)):
            raise NonPositiveVelocity(
                f"velocity {np.min(c)!r} below declared infimum {self.c_inf!r}")
        return c, self.grad(x), self.hess(x)


@dataclass(frozen=True)
class ConstantVelocity(VelocityField):
    value: float
    dim: int = 1

    kind = "constant"

    def __post_init__(self):
        if not self.value > 0:
            raise NonPositiveVelocity(f"constant velocity must be positive, got {self.value}")

    @property
    def c_inf(self):
        return float(self.value)

    def c(self, x):
        return np.full(np.shape(x)[:-1], float(self.value))

    def grad(self, x):
        return np.zeros(np.shape(x))

    def hess(self, x):
        return np.zeros(np.shape(x) + (self.dim,))

    def kernel_spec(self):
        return KIND_CONSTANT, np.array([float(self.value), 0.0])

    def describe(self):
        return {"kind": "constant", "params": {"c0": self.value}}


@dataclass(frozen=True)
class SineSumVelocity(VelocityField):
    """c(x) = base + amp * sin(x_1 + ... + x_d)."""

    base: float
    amp: float
    dim: int = 1

    kind = "sine_sum"

    def __post_init__(self):
        if not self.base - abs(self.amp) > 0:
            raise NonPositiveVelocity("sine-sum velocity requires base > |amp|")

    @property
    def c_inf(self):
        return float(self.base - abs(self.amp))

    def c(self, x):
        return self.base + self.amp * np.sin(np.sum(x, axis=-1))

    def grad(self, x):
        g = self.amp * np.cos(np.sum(x, axis=-1))
        return np.repeat(g[..., None], self.dim, axis=-1)

    def hess(self, x):
        h = -self.amp * np.sin(np.sum(x, axis=-1))
        return h[..., None, None] * np.ones((self.dim, self.dim))

    def kernel_spec(self):
        return KIND_SINE_SUM, np.array([float(self.base), float(self.amp)])

    def describe(self):
        return {"kind": "sine_sum", "params": {"base": self.base, "amp": self.amp}}


@dataclass(frozen=True)
class CustomVelocity(VelocityField):
    """User supplied closure.

    ``func`` must accept points of shape ``(..., d)``. Without ``grad_func`` or
    ``hess_func`` the derivatives fall back to central differences with step
    ``FD_STEP``, which costs roughly 1e-10 absolute accuracy in the gradient and
    1e-6 in the Hessian.
    """

    func: Callable
    c_inf: float
    dim: int = 1
    grad_func: Optional[Callable] = None
    hess_func: Optional[Callable] = None

    kind = "custom"

    def __post_init__(self):
        if not self.c_inf > 0:
            raise NonPositiveVelocity("c_inf must be positive")

    def c(self, x):
        return np.asarray(self.func(x), dtype=float)

    def grad(self, x):
        if self.grad_func is not None:
            return np.asarray(self.grad_func(x), dtype=float)
        out = np.empty(np.shape(x))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = FD_STEP
            out[..., j] = (self.c(x + e) - self.c(x - e)) / (2 * FD_STEP)
        return out

    def hess(self, x):
        if self.hess_func is not None:
            return np.asarray(self.hess_func(x), dtype=float)
        out = np.empty(np.shape(x) + (self.dim,))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = FD_STEP
            out[..., j, :] = (self.grad(x + e) - self.grad(x - e)) / (2 * FD_STEP)
        return 0.5 * (out + np.swapaxes(out, -1, -2))


def eval_velocity(field: VelocityField, x):
    """Return ``(c, grad_c, hess_c)`` at ``x``; raises NonPositiveVelocity."""
    return field.evaluate(x)


def velocity_from_dict(spec: dict, dim: int) -> VelocityField:
    kind = spec.get("kind")
    params = spec.get("params", {})
    if kind == "constant":
        return ConstantVelocity(float(params.get("c0", 1.0)), dim)
    if kind == "sine_sum":
        return SineSumVelocity(float(params.get("base", 1.0)), float(params.get("amp", 0.25)), dim)
    raise ConfigError(f"unknown velocity kind {kind!r}")


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def _tuple(v, d=None):
    t = tuple(float(x) for x in np.atleast_1d(np.asarray(v, dtype=float)))
    if d is not None and len(t) == 1 and d > 1:
        t = t * d
    return t


@dataclass(frozen=True)
class GaussianInitialData:
    """Gaussian wave packet data.

    The normalized profile is

        h(x) = (prod a_j)^(1/4) (pi/k)^(-d/4) exp(i k p~.(x - q~) - k/2 sum a_j (x_j - q~_j)^2)

    and the initial conditions are ``f0 = f0_weight * h`` and
    ``f1 = f1_weight * k * h``. The defaults give the zero-displacement data
    used in all of the bundled scenarios.
    """

    k: float
    center: tuple
    momentum: tuple
    widths: tuple
    f0_weight: float = 0.0
    f1_weight: float = 1.0

    def __post_init__(self):
        d = len(self.center)
        object.__setattr__(self, "center", _tuple(self.center))
        object.__setattr__(self, "momentum", _tuple(self.momentum, d))
        object.__setattr__(self, "widths", _tuple(self.widths, d))
        if not (len(self.momentum) == len(self.widths) == d):
            raise ConfigError("center, momentum and widths must have the same length")
        if d not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {d}")
        if min(self.widths) <= 0:
            raise ConfigError("Gaussian widths must be positive")
        if not np.any(np.asarray(self.momentum) != 0.0):
            raise ConfigError("Gaussian data requires a nonzero momentum")
        if not self.k > 0:
            raise ConfigError("wave number must be positive")

    kind = "gaussian"

    @property
    def dim(self):
        return len(self.center)

    def profile(self, x):
        x = _as_points(x, self.dim)
        q = np.asarray(self.center)
        p = np.asarray(self.momentum)
        a = np.asarray(self.widths)
        k = self.k
        norm = np.prod(a) ** 0.25 * (math.pi / k) ** (-self.dim / 4)
        dx = x - q
        return norm * np.exp(1j * k * dx @ p - 0.5 * k * np.sum(a * dx * dx, axis=-1))

    def f0(self, x):
        return self.f0_weight * self.profile(x)

    def f1(self, x):
        return self.f1_weight * self.k * self.profile(x)

    def sigma(self):
        """Standard deviation per axis of |h|^2."""
        return 1.0 / np.sqrt(2.0 * self.k * np.asarray(self.widths))

    def support_center(self):
        return np.asarray(self.center)

    def with_k(self, k):
        return GaussianInitialData(k, self.center, self.momentum, self.widths,
                                   self.f0_weight, self.f1_weight)

    def describe(self):
        return {"kind": "gaussian", "params": {
            "center": list(self.center), "momentum": list(self.momentum),
            "widths": list(self.widths), "f0_weight": self.f0_weight,
            "f1_weight": self.f1_weight}}


@dataclass(frozen=True)
class GaussianAmplitude:
    """a(x) = (prod a_j)^(1/4) pi^(-d/4) exp(-1/2 sum a_j (x_j - c_j)^2)."""

    widths: tuple
    center: tuple

    kind = "gaussian"

    def __post_init__(self):
        d = len(_tuple(self.center))
        object.__setattr__(self, "center", _tuple(self.center))
        object.__setattr__(self, "widths", _tuple(self.widths, d))
        if min(self.widths) <= 0:
            raise ConfigError("amplitude widths must be positive")

    @property
    def dim(self):
        return len(self.center)

    def sigma(self):
        return 1.0 / np.sqrt(np.asarray(self.widths))

    def __call__(self, y):
        y = _as_points(y, self.dim)
        a = np.asarray(self.widths)
        norm = np.prod(a) ** 0.25 * math.pi ** (-self.dim / 4)
        return norm * np.exp(-0.5 * np.sum(a * (y - self.center) ** 2, axis=-1))

    def integral(self):
        """Closed-form integral of a over R^d."""
        a = np.asarray(self.widths)
        return float(np.prod(a) ** -0.25 * math.pi ** (self.dim / 4) * 2 ** (self.dim / 2))

    def describe(self):
        return {"kind": "gaussian", "widths": list(self.widths), "center": list(self.center)}


def _gauss_moment(n, var):
    """E[u^n] for u ~ N(0, var)."""
    if n % 2:
        return 0.0
    out = 1.0
    for j in range(1, n, 2):
        out *= j
    return out * var ** (n // 2)


@dataclass(frozen=True)
class PolynomialGaussianAmplitude:
    """One-dimensional a(x) = N * poly(x - c) * exp(-alpha (x - c)^2).

    ``coeffs[n]`` multiplies ``(x - c)**n``. The constant N is fixed so that
    the integral of a^2 is one.
    """

    coeffs: tuple
    alpha: float
    center: float = 0.0

    kind = "polynomial_gaussian"
    dim = 1

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _tuple(self.coeffs))
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")

    @property
    def norm(self):
        # integral of poly^2 exp(-2 alpha u^2)
        sq = np.polynomial.polynomial.polymul(self.coeffs, self.coeffs)
        var = 1.0 / (4.0 * self.alpha)
        total = sum(c * _gauss_moment(n, var) for n, c in enumerate(sq))
        total *= math.sqrt(math.pi / (2.0 * self.alpha))
        return 1.0 / math.sqrt(total)

    def sigma(self):
        return np.array([1.0 / math.sqrt(2.0 * self.alpha)])

    def __call__(self, y):
        y = _as_points(y, 1)[..., 0]
        u = y - self.center
        return self.norm * np.polynomial.polynomial.polyval(u, self.coeffs) * np.exp(-self.alpha * u * u)

    def integral(self):
        var = 1.0 / (2.0 * self.alpha)
        total = sum(c * _gauss_moment(n, var) for n, c in enumerate(self.coeffs))
        return float(self.norm * total * math.sqrt(math.pi / self.alpha))

    def describe(self):
        return {"kind": "polynomial_gaussian", "coeffs": list(self.coeffs),
                "alpha": self.alpha, "center": self.center}


@dataclass(frozen=True)
class CustomAmplitude:
    """Arbitrary amplitude; ``sigmas`` sets the effective support per axis."""

    func: Callable
    center: tuple
    sigmas: tuple

    kind = "custom"

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple(self.center))
        object.__setattr__(self, "sigmas", _tuple(self.sigmas, len(self.center)))

    @property
    def dim(self):
        return len(self.center)

    def sigma(self):
        return np.asarray(self.sigmas)

    def __call__(self, y):
        return np.asarray(self.func(_as_points(y, self.dim)), dtype=float)

    def describe(self):
        return {"kind": "custom"}


@dataclass(frozen=True)
class QuadraticPhase:
    """S(x) = 1/2 x.A.x + b.x + s0 with constant symmetric Hessian A."""

    hessian: tuple
    linear: tuple
    constant: float = 0.0

    kind = "quadratic"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        b = np.atleast_1d(np.asarray(self.linear, dtype=float))
        if A.shape != (b.size, b.size):
            raise ConfigError("phase Hessian and linear term disagree in dimension")
        if not np.allclose(A, A.T):
            raise ConfigError("phase Hessian must be symmetric")
        object.__setattr__(self, "hessian", tuple(map(tuple, A)))
        object.__setattr__(self, "linear", tuple(b))

    @classmethod
    def centered(cls, center, scale=1.0, constant=None):
        """S(x) = scale * |x - center|^2 (plus an optional different constant)."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        d = c.size
        s0 = scale * float(c @ c) if constant is None else constant
        return cls(tuple(map(tuple, 2.0 * scale * np.eye(d))), tuple(-2.0 * scale * c), s0)

    @property
    def dim(self):
        return len(self.linear)

    @property
    def A(self):
        return np.asarray(self.hessian)

    @property
    def b(self):
        return np.asarray(self.linear)

    def __call__(self, y):
        y = _as_points(y, self.dim)
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.A, y) + y @ self.b + self.constant

    def grad(self, y):
        return _as_points(y, self.dim) @ self.A.T + self.b

    def hess(self, y):
        y = _as_points(y, self.dim)
        return np.broadcast_to(self.A, y.shape + (self.dim,)).copy()

    def inverse(self, p):
        if abs(np.linalg.det(self.A)) == 0.0:
            raise AssumptionViolated("phase Hessian is singular; gradient map not invertible")
        p = _as_points(p, self.dim)
        return np.linalg.solve(self.A, (p - self.b)[..., None])[..., 0]

    def in_domain(self, p):
        return np.ones(np.shape(p)[:-1], dtype=bool)

    def describe(self):
        return {"kind": "quadratic", "hessian": [list(r) for r in self.hessian],
                "linear": list(self.linear), "constant": self.constant}


@dataclass(frozen=True)
class CustomPhase:
    """User phase with explicit derivatives; ``inverse``/``domain`` optional."""

    func: Callable
    grad_func: Callable
    hess_func: Callable
    dim: int = 1
    inverse_func: Optional[Callable] = None
    domain_func: Optional[Callable] = None

    kind = "custom"

    def __call__(self, y):
        return np.asarray(self.func(_as_points(y, self.dim)), dtype=float)

    def grad(self, y):
        return np.asarray(self.grad_func(_as_points(y, self.dim)), dtype=float)

    def hess(self, y):
        return np.asarray(self.hess_func(_as_points(y, self.dim)), dtype=float)

    def inverse(self, p):
        if self.inverse_func is None:
            raise AssumptionViolated("custom phase has no inverse gradient map")
        return np.asarray(self.inverse_func(_as_points(p, self.dim)), dtype=float)

    def in_domain(self, p):
        if self.domain_func is None:
            raise AssumptionViolated("custom phase has no declared domain for its inverse")
        return np.asarray(self.domain_func(_as_points(p, self.dim)), dtype=bool)

    def describe(self):
        return {"kind": "custom"}


@dataclass(frozen=True)
class WKBInitialData:
    """WKB data ``f1 = f1_weight * k * a_in(x) exp(i k S_in(x))``, ``f0 = f0_weight * a_in e^{ikS}``."""

    k: float
    amplitude: object
    phase: object
    f0_weight: float = 0.0
    f1_weight: float = 1.0

    kind = "wkb"

    def __post_init__(self):
        if self.amplitude.dim != self.phase.dim:
            raise ConfigError("amplitude and phase dimensions differ")
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not self.k > 0:
            raise ConfigError("wave number must be positive")

    @property
    def dim(self):
        return self.amplitude.dim

    def profile(self, x):
        x = _as_points(x, self.dim)
        return self.amplitude(x) * np.exp(1j * self.k * self.phase(x))

    def f0(self, x):
        return self.f0_weight * self.profile(x)

    def f1(self, x):
        return self.f1_weight * self.k * self.profile(x)

    def sigma(self):
        return self.amplitude.sigma()

    def support_center(self):
        return np.asarray(self.amplitude.center, dtype=float).reshape(self.dim)

    def with_k(self, k):
        return WKBInitialData(k, self.amplitude, self.phase, self.f0_weight, self.f1_weight)

    def describe(self):
        return {"kind": "wkb", "params": {"amplitude": self.amplitude.describe(),
                                          "phase": self.phase.describe(),
                                          "f0_weight": self.f0_weight,
                                          "f1_weight": self.f1_weight}}


@dataclass(frozen=True)
class ValidationReport:
    residual: float
    injective: Optional[bool] = None
    support: Optional[tuple] = None


def _tensor_gauss_legendre(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    axes, weights = [], []
    for a, b in zip(lo, hi):
        axes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    wt = weights[0]
    for extra in weights[1:]:
        wt = np.multiply.outer(wt, extra)
    return mesh, wt


def validate_initial_data(data, nodes=None) -> ValidationReport:
    """Check normalization by quadrature and, for WKB data, injectivity of grad S.

    Raises NotNormalized when the normalization residual exceeds 1e-4 and
    NonInjectivePhase when det(hess S) changes sign on the amplitude support
    (six standard deviations per axis around the center).
    """
    d = data.dim
    center = data.support_center()
    sig = data.sigma()
    if isinstance(data, GaussianInitialData):
        n = nodes or {1: 96, 2: 64, 3: 40}[d]
        mesh, w = _tensor_gauss_legendre(center - 10 * sig, center + 10 * sig, n)
        total = float(np.sum(w * np.abs(data.profile(mesh)) ** 2))
        residual = abs(total - 1.0)
        if residual > 1e-4:
            raise NotNormalized(f"integral of |f1/k|^2 is {total:.8g}")
        return ValidationReport(residual)

    n = nodes or {1: 192, 2: 96, 3: 48}[d]
    mesh, w = _tensor_gauss_legendre(center - 10 * sig, center + 10 * sig, n)
    total = float(np.sum(w * data.amplitude(mesh) ** 2))
    residual = abs(total - 1.0)
    if residual > 1e-4:
        raise NotNormalized(f"integral of a_in^2 is {total:.8g}")
    lo, hi = center - 6 * sig, center + 6 * sig
    axes = [np.linspace(a, b, {1: 2001, 2: 201, 3: 41}[d]) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    det = np.linalg.det(np.asarray(data.phase.hess(pts)).reshape(pts.shape[:-1] + (d, d)))
    injective = not (np.any(det > 0) and np.any(det < 0)) and not np.any(det == 0)
    if not injective:
        raise NonInjectivePhase("det of the phase Hessian changes sign or vanishes on the amplitude support")
    return ValidationReport(residual, True, (tuple(lo), tuple(hi)))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid.

    Non-periodic grids include both end points (trapezoid quadrature);
    periodic grids exclude the upper bound. The spacing is validated against
    ``2 pi / (ppw k)`` so that an under-resolved grid cannot be built.
    """

    lower: tuple
    upper: tuple
    shape: tuple
    k: float
    ppw: float = DEFAULT_PPW
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lower", _tuple(self.lower))
        object.__setattr__(self, "upper", _tuple(self.upper))
        object.__setattr__(self, "shape", tuple(int(n) for n in np.atleast_1d(self.shape)))
        d = len(self.lower)
        if d not in (1, 2, 3) or len(self.upper) != d or len(self.shape) != d:
            raise ConfigError("grid bounds and shape must share a dimension in 1..3")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ConfigError("grid upper bounds must exceed lower bounds")
        if min(self.shape) < MIN_GRID_POINTS:
            raise ConfigError(f"grid needs at least {MIN_GRID_POINTS} points per axis")
        hmax = self.max_spacing(self.k, self.ppw)
        if any(h > hmax * (1 + 1e-12) for h in self.spacing):
            raise GridTooCoarse(f"grid spacing {self.spacing} exceeds 2pi/(ppw k) = {hmax:.4g}")

    @staticmethod
    def max_spacing(k, ppw=DEFAULT_PPW):
        return 2.0 * math.pi / (ppw * k)

    @classmethod
    def for_box(cls, lower, upper, k, ppw=DEFAULT_PPW, periodic=False, pow2=False):
        lower = _tuple(lower)
        upper = _tuple(upper, len(lower))
        hmax = cls.max_spacing(k, ppw)
        shape = []
        for l, u in zip(lower, upper):
            n = math.ceil((u - l) / hmax - 1e-9)
            if not periodic:
                n += 1
            n = max(n, MIN_GRID_POINTS)
            if pow2:
                n = 1 << (n - 1).bit_length()
            shape.append(n)
        return cls(lower, upper, tuple(shape), k, ppw, periodic)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def spacing(self):
        if self.periodic:
            return tuple((u - l) / n for l, u, n in zip(self.lower, self.upper, self.shape))
        return tuple((u - l) / (n - 1) for l, u, n in zip(self.lower, self.upper, self.shape))

    def axes(self):
        return [l + h * np.arange(n) for l, h, n in zip(self.lower, self.spacing, self.shape)]

    def mesh(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def weights(self):
        """Per-axis quadrature weights (trapezoid, or uniform when periodic)."""
        out = []
        for h, n in zip(self.spacing, self.shape):
            w = np.full(n, h)
            if not self.periodic:
                w[0] = w[-1] = 0.5 * h
            out.append(w)
        return out

    def same_as(self, other) -> bool:
        return (self.shape == other.shape and self.periodic == other.periodic
                and np.allclose(self.lower, other.lower, rtol=0, atol=1e-12)
                and np.allclose(self.upper, other.upper, rtol=0, atol=1e-12))

    def describe(self):
        return {"lower": list(self.lower), "upper": list(self.upper), "shape": list(self.shape),
                "k": self.k, "ppw": self.ppw, "periodic": self.periodic}
