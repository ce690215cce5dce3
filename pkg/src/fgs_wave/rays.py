"""Ray tracing with amplitude transport for the two wave branches.

Each sample carries ``(Q, P, a, J)`` where ``J = d(Q, P)/d(q, p)`` is the real
phase-space Jacobian, evolved by the variational equations. The complex matrix
``Z = (Q_q + P_p) + i (P_q - Q_p)`` is assembled from ``J`` when needed.

Two momentum conventions are supported through ``momentum_sign``:

``"hamiltonian"`` (default)
    dP/dt = -dH/dQ on each branch, i.e. ``-s |P| grad c`` for branch ``s``.
    This conserves ``H`` along both branches.
``"literal"``
    dP/dt = -|P| grad c on both branches.

The batch integrator is compiled with numba for the built-in velocity fields
and falls back to a vectorized numpy RK4 for user closures. Constant
velocity fields use the exact flow, which RK4 reproduces to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, MomentumUnderflow, SingularZ
from ._kernels import get_kernel, state_length
from .model import KIND_CONSTANT, KIND_SINE_SUM, ConstantVelocity, VelocityField

P_FLOOR = 1e-8
DETZ_FLOOR = 1e-12
DEFAULT_DT = 1e-4
MOMENTUM_SIGNS = ("hamiltonian", "literal")


class Branch(IntEnum):
    PLUS = 1
    MINUS = -1

    @property
    def label(self):
        return "+" if self is Branch.PLUS else "-"

    @classmethod
    def parse(cls, value):
        if isinstance(value, Branch):
            return value
        if value in ("+", 1, "plus", "PLUS"):
            return cls.PLUS
        if value in ("-", -1, "minus", "MINUS"):
            return cls.MINUS
        raise ConfigError(f"unknown branch {value!r}")


def _pdot_factor(branch, momentum_sign):
    if momentum_sign == "hamiltonian":
        return -float(branch)
    if momentum_sign == "literal":
        return -1.0
    raise ConfigError(f"momentum_sign must be one of {MOMENTUM_SIGNS}")


def z_from_jacobian(J):
    """Assemble Z from the real Jacobian(s) of shape ``(..., 2d, 2d)``."""
    d = J.shape[-1] // 2
    Qq, Qp = J[..., :d, :d], J[..., :d, d:]
    Pq, Pp = J[..., d:, :d], J[..., d:, d:]
    return (Qq + Pp) + 1j * (Pq - Qp)


@dataclass
class TrajectoryState:
    """Evolved FGA variables for one phase point on one branch."""

    t: float
    Q: np.ndarray
    P: np.ndarray
    a: complex
    J: np.ndarray
    branch: Branch

    @property
    def dim(self):
        return self.Q.size

    @property
    def Z(self):
        return z_from_jacobian(self.J)

    @property
    def det_z(self):
        return complex(np.linalg.det(self.Z))

    @classmethod
    def initial(cls, q, p, branch):
        q = np.atleast_1d(np.asarray(q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(p, dtype=float)).copy()
        d = q.size
        if np.linalg.norm(p) <= P_FLOOR:
            raise MomentumUnderflow(f"|p| = {np.linalg.norm(p):.3g} below floor", 0.0)
        return cls(0.0, q, p, complex(2.0 ** (d / 2)), np.eye(2 * d), Branch.parse(branch))


def hamiltonian(branch, field: VelocityField, Q, P):
    """Return ``(H, dH/dP, dH/dQ)`` for ``H = s c(Q) |P|``."""
    s = float(Branch.parse(branch))
    Q = np.atleast_1d(np.asarray(Q, dtype=float))
    P = np.atleast_1d(np.asarray(P, dtype=float))
    norm = float(np.linalg.norm(P))
    if norm <= P_FLOOR:
        raise MomentumUnderflow(f"|P| = {norm:.3g} below floor")
    c, g, _ = field.evaluate(Q)
    c = float(np.squeeze(c))
    g = np.reshape(g, Q.shape)
    return s * c * norm, s * c * P / norm, s * norm * g


def _rhs_arrays(field, s, pf, Q, P, a, J):
    """Vectorized right-hand side over leading axes."""
    d = Q.shape[-1]
    c, g, hc = field.evaluate(Q)
    c = np.reshape(c, Q.shape[:-1])
    g = np.reshape(g, Q.shape)
    hc = np.reshape(hc, Q.shape + (d,))
    norm = np.linalg.norm(P, axis=-1)
    if np.any(norm <= P_FLOOR):
        raise MomentumUnderflow("|P| fell below the floor during evolution")
    n = P / norm[..., None]
    Qdot = s * c[..., None] * n
    Pdot = pf * norm[..., None] * g
    eye = np.eye(d)
    S = np.zeros(Q.shape[:-1] + (2 * d, 2 * d))
    S[..., :d, :d] = s * n[..., :, None] * g[..., None, :]
    S[..., :d, d:] = s * (c / norm)[..., None, None] * (eye - n[..., :, None] * n[..., None, :])
    S[..., d:, :d] = pf * norm[..., None, None] * hc
    S[..., d:, d:] = pf * g[..., :, None] * n[..., None, :]
    Jdot = S @ J
    Z = z_from_jacobian(J)
    detz = np.linalg.det(Z)
    if np.any(np.abs(detz) < DETZ_FLOOR):
        raise SingularZ("|det Z| fell below 1e-12")
    Zdot = z_from_jacobian(Jdot)
    tr = np.trace(np.linalg.solve(Z, Zdot), axis1=-2, axis2=-1)
    adot = a * (s * np.sum(n * g, axis=-1) + 0.5 * tr)
    return Qdot, Pdot, adot, Jdot


def ode_rhs(state: TrajectoryState, field: VelocityField, momentum_sign="hamiltonian"):
    """Time derivatives ``(dQ/dt, dP/dt, da/dt, dJ/dt)`` at ``state``."""
    s = float(state.branch)
    pf = _pdot_factor(state.branch, momentum_sign)
    Qd, Pd, ad, Jd = _rhs_arrays(field, s, pf, state.Q[None], state.P[None],
                                 np.array([state.a]), state.J[None])
    return Qd[0], Pd[0], complex(ad[0]), Jd[0]


# ---------------------------------------------------------------------------
# batch evolution
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryBatch:
    """Evolved states of many samples on one branch at a common time.

    ``Qdot``, ``Pdot`` and ``adot`` hold the right-hand side at the final
    state; reconstruction uses them for the time derivative of the field.
    """

    t: float
    branch: Branch
    Q: np.ndarray
    P: np.ndarray
    a: np.ndarray
    J: np.ndarray
    Qdot: np.ndarray
    Pdot: np.ndarray
    adot: np.ndarray

    def __len__(self):
        return self.Q.shape[0]

    @property
    def dim(self):
        return self.Q.shape[1]

    @property
    def det_z(self):
        return np.linalg.det(z_from_jacobian(self.J))

    def state(self, j) -> TrajectoryState:
        return TrajectoryState(self.t, self.Q[j].copy(), self.P[j].copy(), complex(self.a[j]),
                               self.J[j].copy(), self.branch)

    @classmethod
    def from_states(cls, states, rates):
        b = states[0].branch
        return cls(states[0].t, b,
                   np.array([s.Q for s in states]), np.array([s.P for s in states]),
                   np.array([s.a for s in states]), np.array([s.J for s in states]),
                   np.array([r[0] for r in rates]), np.array([r[1] for r in rates]),
                   np.array([r[2] for r in rates]))


def _split_steps(t_final, dt):
    if t_final < 0 or dt <= 0:
        raise ConfigError("need t_final >= 0 and dt > 0")
    n_full = int(math.floor(t_final / dt + 1e-9))
    last = t_final - n_full * dt
    if abs(last) < 1e-12 * max(1.0, t_final):
        last = 0.0
    if last < 0:
        n_full -= 1
        last = t_final - n_full * dt
    return n_full, last


def _exact_constant(field: ConstantVelocity, s, q, p, t):
    d = q.shape[1]
    c = field.value
    norm = np.linalg.norm(p, axis=1)
    if np.any(norm <= P_FLOOR):
        raise MomentumUnderflow("|p| below floor", 0.0)
    n = p / norm[:, None]
    Q = q + s * c * t * n
    P = p.copy()
    J = np.tile(np.eye(2 * d), (q.shape[0], 1, 1))
    proj = np.eye(d) - n[:, :, None] * n[:, None, :]
    J[:, :d, d:] = (s * c * t / norm)[:, None, None] * proj
    tau = s * c * t / (2 * norm)
    w = 1.0 - 1j * tau
    a = 2.0 ** (d / 2) * w ** ((d - 1) / 2)
    Qdot = s * c * n
    Pdot = np.zeros_like(p)
    adot = a * 0.5 * (d - 1) * (-1j * s * c / (2 * norm)) / w
    return Q, P, a, J, Qdot, Pdot, adot


def evolve_batch(q, p, branch, field: VelocityField, t_final, dt=DEFAULT_DT,
                 momentum_sign="hamiltonian", exact_constant=True) -> TrajectoryBatch:
    """Evolve all phase points ``(q[j], p[j])`` on one branch to ``t_final``.

    Raises MomentumUnderflow or SingularZ carrying the failure time of the
    first failing sample.
    """
    branch = Branch.parse(branch)
    s = float(branch)
    pf = _pdot_factor(branch, momentum_sign)
    q = np.array(q, dtype=float, ndmin=2)
    p = np.array(p, dtype=float, ndmin=2)
    if q.shape != p.shape:
        raise ConfigError("q and p must have equal shapes")
    M, d = q.shape
    if np.any(np.linalg.norm(p, axis=1) <= P_FLOOR):
        raise MomentumUnderflow("initial |p| below floor", 0.0)
    n_full, last = _split_steps(t_final, dt)

    if exact_constant and isinstance(field, ConstantVelocity):
        out = _exact_constant(field, s, q, p, t_final)
        return TrajectoryBatch(t_final, branch, *out)

    a0 = np.full(M, 2.0 ** (d / 2), dtype=complex)
    J0 = np.tile(np.eye(2 * d), (M, 1, 1))
    if _kernel_params(field) is not None:
        return _evolve_compiled(q, p, a0, J0, branch, field, n_full, last, dt, pf)
    return _evolve_numpy(q, p, a0, J0, branch, field, n_full, last, dt, s, pf)


def _kernel_params(field):
    spec = field.kernel_spec()
    if spec is None:
        return None
    kind, params = spec
    if kind == KIND_CONSTANT:
        return float(params[0]), 0.0
    if kind == KIND_SINE_SUM:
        return float(params[0]), float(params[1])
    return None


def _evolve_compiled(Q, P, a, J, branch, field, n_full, last, dt, pf, t0=0.0):
    M, d = Q.shape
    s = float(branch)
    base, amp = _kernel_params(field)
    Y = np.empty((M, state_length(d)))
    Y[:, :d] = Q
    Y[:, d:2 * d] = P
    Y[:, 2 * d] = np.real(a)
    Y[:, 2 * d + 1] = np.imag(a)
    Y[:, 2 * d + 2:] = J.reshape(M, -1)
    D = np.zeros_like(Y)
    status = np.zeros(M, dtype=np.int64)
    fail_t = np.zeros(M)
    get_kernel(d)(base, amp, s, pf, Y, float(dt), int(n_full), float(last), D, status, fail_t)
    if np.any(status):
        j = int(np.argmax(status != 0))
        tf = t0 + float(fail_t[j])
        if status[j] == 1:
            raise MomentumUnderflow(f"|P| below floor for sample {j} at t={tf:.6g}", tf)
        raise SingularZ(f"|det Z| below 1e-12 for sample {j} at t={tf:.6g}", tf)
    Qf = Y[:, :d].copy()
    field.evaluate(Qf)  # enforces the c_inf bound at the end points
    t = t0 + n_full * dt + last
    return TrajectoryBatch(t, branch, Qf, Y[:, d:2 * d].copy(),
                           Y[:, 2 * d] + 1j * Y[:, 2 * d + 1],
                           Y[:, 2 * d + 2:].reshape(M, 2 * d, 2 * d).copy(),
                           D[:, :d].copy(), D[:, d:2 * d].copy(), D[:, 2 * d] + 1j * D[:, 2 * d + 1])


def _evolve_numpy(Q, P, a, J, branch, field, n_full, last, dt, s, pf, t0=0.0):
    t = t0
    steps = [dt] * n_full + ([last] if last > 0 else [])
    for h in steps:
        try:
            k1 = _rhs_arrays(field, s, pf, Q, P, a, J)
            k2 = _rhs_arrays(field, s, pf, *(x + 0.5 * h * kx for x, kx in zip((Q, P, a, J), k1)))
            k3 = _rhs_arrays(field, s, pf, *(x + 0.5 * h * kx for x, kx in zip((Q, P, a, J), k2)))
            k4 = _rhs_arrays(field, s, pf, *(x + h * kx for x, kx in zip((Q, P, a, J), k3)))
        except MomentumUnderflow as exc:
            raise MomentumUnderflow(f"{exc} at t={t:.6g}", t) from None
        except SingularZ as exc:
            raise SingularZ(f"{exc} at t={t:.6g}", t) from None
        Q, P, a, J = (x + h / 6 * (r1 + 2 * r2 + 2 * r3 + r4)
                      for x, r1, r2, r3, r4 in zip((Q, P, a, J), k1, k2, k3, k4))
        t += h
    Qd, Pd, ad, _ = _rhs_arrays(field, s, pf, Q, P, a, J)
    return TrajectoryBatch(t, branch, Q, P, a, J, Qd, Pd, ad)


def evolve(initial, branch, field: VelocityField, t_final, dt=DEFAULT_DT,
           momentum_sign="hamiltonian") -> TrajectoryState:
    """Evolve a single phase point ``initial = (q, p)`` with classic RK4."""
    q, p = initial
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if t_final == 0:
        return TrajectoryState.initial(q, p, branch)
    batch = evolve_batch(q[None], p[None], branch, field, t_final, dt, momentum_sign,
                         exact_constant=False)
    return batch.state(0)


def trajectory_history(initial, branch, field, t_final, dt=DEFAULT_DT, stride=100,
                       momentum_sign="hamiltonian"):
    """Rows ``(t, Q..., P..., Re a, Im a, Re det Z, Im det Z)`` every ``stride`` steps."""
    q, p = (np.atleast_1d(np.asarray(v, dtype=float)) for v in initial)
    branch = Branch.parse(branch)
    s = float(branch)
    pf = _pdot_factor(branch, momentum_sign)
    n_full, last = _split_steps(t_final, dt)
    if stride < 1:
        raise ConfigError("stride must be positive")
    state = TrajectoryState.initial(q, p, branch)
    Q, P = state.Q[None].copy(), state.P[None].copy()
    a = np.array([state.a])
    J = state.J[None].copy()

    chunks = [min(stride, n_full - i) for i in range(0, n_full, stride)]
    plan = [(n, 0.0) for n in chunks]
    if last > 0:
        plan.append((0, last))

    def row(t):
        dz = complex(np.linalg.det(z_from_jacobian(J[0])))
        return [t, *Q[0], *P[0], a[0].real, a[0].imag, dz.real, dz.imag]

    compiled = _kernel_params(field) is not None
    rows = [row(0.0)]
    t = 0.0
    for n, lp in plan:
        if compiled:
            b = _evolve_compiled(Q, P, a, J, branch, field, n, lp, dt, pf, t0=t)
        else:
            b = _evolve_numpy(Q, P, a, J, branch, field, n, lp, dt, s, pf, t0=t)
        Q, P, a, J = b.Q, b.P, b.a, b.J
        t += n * dt + lp
        rows.append(row(t))
    return np.array(rows)
