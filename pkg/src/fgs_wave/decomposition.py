"""Window transform of the initial data onto frozen Gaussians.

For a phase point ``(q, p)`` the branch weights are

    psi_pm(q, p) = 1/2 (w0 +- i w1 / (c(q) |p|)) * G(q, p),
    G(q, p)      = int h(y) exp(-i k p.(y - q) - k/2 |y - q|^2) dy,

where the initial data are ``f0 = w0 h`` and ``f1 = w1 k h``. Only ``G``
depends on the profile ``h``; it is available in closed form for Gaussian
packets and for WKB data with a quadratic phase and a Gaussian (or, in one
dimension, polynomial times Gaussian) amplitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MomentumUnderflow, NoConvergence, UnsupportedForm
from .model import (GaussianAmplitude, GaussianInitialData, PolynomialGaussianAmplitude,
                    QuadraticPhase, WKBInitialData)
from .rays import P_FLOOR

CLOSED_FORM = "ClosedForm"
QUADRATURE = "Quadrature"
SUPPORT_RADIUS = 8.0
NODE_BUDGET = 2 ** 20


@dataclass
class PsiValue:
    """Branch weights at one or many phase points."""

    plus: np.ndarray
    minus: np.ndarray
    provenance: str

    def __getitem__(self, branch):
        return self.plus if int(branch) > 0 else self.minus


def _points(z0, d):
    q, p = z0
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    scalar = q.ndim <= 1
    q = q.reshape(-1, d)
    p = p.reshape(-1, d)
    if np.any(np.linalg.norm(p, axis=1) <= P_FLOOR):
        raise MomentumUnderflow("|p| below floor in window transform")
    return q, p, scalar


def _combine(data, field, q, p, G, provenance, scalar):
    c = np.reshape(field.evaluate(q)[0], q.shape[0])
    w = 1j * data.f1_weight / (c * np.linalg.norm(p, axis=1))
    plus = 0.5 * (data.f0_weight + w) * G
    minus = 0.5 * (data.f0_weight - w) * G
    if scalar:
        return PsiValue(complex(plus[0]), complex(minus[0]), provenance)
    return PsiValue(plus, minus, provenance)


def gaussian_overlap(data: GaussianInitialData, q, p):
    """Closed-form ``G`` for the normalized Gaussian packet."""
    k = data.k
    qt = np.asarray(data.center)
    pt = np.asarray(data.momentum)
    a = np.asarray(data.widths)
    d = data.dim
    pref = 2 ** (d / 2) * math.pi ** (d / 4) * k ** (-d / 4) * np.prod(np.sqrt(np.sqrt(a) / (1 + a)))
    decay = -np.sum(((pt - p) ** 2 + a * (qt - q) ** 2) / (2 * (1 + a)), axis=-1) * k
    phase = np.sum((a * qt + q) * (pt - p) / (1 + a) + p * q - pt * qt, axis=-1) * k
    return pref * np.exp(decay + 1j * phase)


def psi_gaussian(data: GaussianInitialData, field, z0) -> PsiValue:
    """Branch weights for Gaussian packet data, in closed form."""
    q, p, scalar = _points(z0, data.dim)
    return _combine(data, field, q, p, gaussian_overlap(data, q, p), CLOSED_FORM, scalar)


def _sqrt_det(A):
    """Square root of det A continued from real positive definite Re A."""
    lam = np.linalg.eigvals(A)
    return np.prod(np.sqrt(lam), axis=-1)


def _complex_gaussian_moments(mu, var, n):
    """E[u^j], j = 0..n, for the complex Gaussian weight with mean mu and variance var."""
    m = [np.ones_like(mu), mu]
    for j in range(2, n + 1):
        m.append(mu * m[j - 1] + (j - 1) * var * m[j - 2])
    return m[: n + 1]


def wkb_overlap(data: WKBInitialData, q, p):
    """Closed-form ``G`` for WKB data; raises UnsupportedForm outside the class."""
    amp, phase = data.amplitude, data.phase
    if not isinstance(phase, QuadraticPhase):
        raise UnsupportedForm("closed-form window transform needs a quadratic phase")
    k = data.k
    d = data.dim
    Aph, b, s0 = phase.A, phase.b, phase.constant
    if isinstance(amp, GaussianAmplitude):
        wa = np.asarray(amp.widths)
        xc = np.asarray(amp.center)
        lognorm = 0.25 * np.sum(np.log(wa)) - 0.25 * d * math.log(math.pi)
        poly = None
    elif isinstance(amp, PolynomialGaussianAmplitude):
        if d != 1:
            raise UnsupportedForm("polynomial amplitudes are one-dimensional")
        wa = np.array([2.0 * amp.alpha])
        xc = np.array([amp.center])
        lognorm = math.log(amp.norm)
        poly = np.asarray(amp.coeffs)
    else:
        raise UnsupportedForm(f"no closed form for amplitude kind {amp.kind!r}")

    # exponent = -y.Aq.y + B.y + C
    Aq = 0.5 * np.diag(wa) - 0.5j * k * Aph + 0.5 * k * np.eye(d)
    B = wa * xc + 1j * k * b - 1j * k * p + k * q
    C = (-0.5 * np.sum(wa * xc * xc) + 1j * k * s0 + 1j * k * np.sum(p * q, axis=-1)
         - 0.5 * k * np.sum(q * q, axis=-1) + lognorm)
    Ainv = np.linalg.inv(Aq)
    quad = 0.25 * np.einsum("...i,ij,...j->...", B, Ainv, B)
    G = math.pi ** (d / 2) / _sqrt_det(Aq) * np.exp(quad + C)
    if poly is not None:
        mu = 0.5 * (B[..., 0] / Aq[0, 0]) - xc[0]
        var = 0.5 / Aq[0, 0]
        moms = _complex_gaussian_moments(mu, var, len(poly) - 1)
        G = G * sum(cf * mm for cf, mm in zip(poly, moms))
    return G


def psi_wkb_closed(data: WKBInitialData, field, z0) -> PsiValue:
    """Branch weights for WKB data with a quadratic phase, in closed form."""
    q, p, scalar = _points(z0, data.dim)
    return _combine(data, field, q, p, wkb_overlap(data, q, p), CLOSED_FORM, scalar)


def _profile(data):
    return data.profile


def _quadrature_one(profile, k, q, p, tol, radius, n0=32):
    d = q.size
    half = radius / math.sqrt(k)
    prev = None
    # start at the resolution of exp(i k p.y) over the support
    n = max(n0, 1 << max(math.ceil(k * half * max(float(np.linalg.norm(p)), 1.0) / math.pi), 1).bit_length())
    while n ** d <= NODE_BUDGET:
        x, w = np.polynomial.legendre.leggauss(n)
        axes = [qj + half * x for qj in q]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        wt = w * half
        W = wt
        for _ in range(d - 1):
            W = np.multiply.outer(W, wt)
        dy = mesh - q
        kern = np.exp(-1j * k * (dy @ p) - 0.5 * k * np.sum(dy * dy, axis=-1))
        val = complex(np.sum(W * profile(mesh) * kern))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val
        if prev is not None and val == 0.0 and prev == 0.0:
            return val
        prev = val
        n *= 2
    raise NoConvergence(f"window quadrature did not reach tol={tol:g} within {NODE_BUDGET} nodes")


def psi_quadrature(data, field, z0, tol=1e-10, radius=SUPPORT_RADIUS) -> PsiValue:
    """Branch weights by adaptive tensor Gauss-Legendre quadrature.

    The window support ``q +- radius/sqrt(k)`` is resolved with node counts
    per axis starting at the resolution of the carrier ``exp(-i k p.y)``
    (at least 32) and doubling until successive levels agree to ``tol``
    (relative). Raises NoConvergence past ``2**20`` total nodes.
    """
    q, p, scalar = _points(z0, data.dim)
    prof = _profile(data)
    G = np.array([_quadrature_one(prof, data.k, q[j], p[j], tol, radius) for j in range(q.shape[0])])
    return _combine(data, field, q, p, G, QUADRATURE, scalar)


def psi_values(data, field, z0, method="auto") -> PsiValue:
    """Dispatch to the closed form when available, else quadrature."""
    if method not in ("auto", "closed", "quadrature"):
        raise UnsupportedForm(f"unknown method {method!r}")
    if method == "quadrature":
        return psi_quadrature(data, field, z0)
    if isinstance(data, GaussianInitialData):
        return psi_gaussian(data, field, z0)
    try:
        return psi_wkb_closed(data, field, z0)
    except UnsupportedForm:
        if method == "closed":
            raise
        return psi_quadrature(data, field, z0)
