import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fgs_wave.errors import ConfigError, MomentumUnderflow, SingularZ
from fgs_wave.model import ConstantVelocity, CustomVelocity, SineSumVelocity
from fgs_wave.rays import (Branch, TrajectoryState, evolve, evolve_batch, hamiltonian, ode_rhs,
                           trajectory_history, z_from_jacobian)

C1 = ConstantVelocity(1.0, 1)
C2 = SineSumVelocity(1.0, 0.25, 1)


def _points(rng, M, d, pmin=0.5):
    q = rng.uniform(-1, 1, (M, d))
    p = rng.normal(size=(M, d))
    p *= (pmin + rng.uniform(0, 1.5, M))[:, None] / np.linalg.norm(p, axis=1)[:, None]
    return q, p


@pytest.mark.parametrize("branch,H,dP,dQ", [("+", 1.0, -1.0, 0.0), ("-", -1.0, 1.0, 0.0)])
def test_hamiltonian_constant_speed(branch, H, dP, dQ):
    h, hp, hq = hamiltonian(branch, C1, [0.0], [-1.0])
    assert (h, float(hp[0]), float(hq[0])) == (H, dP, dQ)


def test_hamiltonian_variable_speed():
    h, hp, hq = hamiltonian("+", C2, [0.0], [2.0])
    assert h == pytest.approx(2.0)
    assert float(hp[0]) == pytest.approx(1.0)
    assert float(hq[0]) == pytest.approx(0.5)
    e = 1e-6
    fd = (hamiltonian("+", C2, [e], [2.0])[0] - hamiltonian("+", C2, [-e], [2.0])[0]) / (2 * e)
    assert fd == pytest.approx(0.5, rel=1e-8)


def test_hamiltonian_momentum_floor():
    with pytest.raises(MomentumUnderflow):
        hamiltonian("+", C1, [0.0], [0.0])


def test_branch_parsing():
    assert Branch.parse("+") is Branch.PLUS and Branch.parse(-1) is Branch.MINUS
    assert len(Branch) == 2
    with pytest.raises(ConfigError):
        Branch.parse("x")


def test_rhs_translation_in_one_dimension():
    st0 = TrajectoryState(0.0, np.array([0.0]), np.array([-1.0]), math.sqrt(2), np.eye(2), Branch.PLUS)
    Qd, Pd, ad, Jd = ode_rhs(st0, C1)
    assert Qd[0] == -1.0 and Pd[0] == 0.0 and ad == 0.0
    assert np.all(Jd == 0.0)


def test_rhs_transverse_projector_in_two_dimensions():
    st0 = TrajectoryState.initial([0.0, 0.0], [1.0, 0.0], "+")
    Qd, Pd, _, Jd = ode_rhs(st0, ConstantVelocity(1.0, 2))
    np.testing.assert_array_equal(Qd, [1.0, 0.0])
    np.testing.assert_array_equal(Pd, [0.0, 0.0])
    # with J = I the right-hand side of dJ/dt is the linearization itself
    np.testing.assert_allclose(Jd[:2, 2:], np.diag([0.0, 1.0]), atol=1e-15)
    e = 1e-6
    fd = np.array([(hamiltonian("+", ConstantVelocity(1.0, 2), [0, 0], np.array([1.0, 0.0]) + e * v)[1]
                    - hamiltonian("+", ConstantVelocity(1.0, 2), [0, 0], np.array([1.0, 0.0]) - e * v)[1])
                   / (2 * e) for v in np.eye(2)]).T
    np.testing.assert_allclose(fd, Jd[:2, 2:], atol=1e-8)


def test_rhs_amplitude_term_vanishes_for_constant_speed(rng):
    q, p = _points(rng, 1, 2)
    st0 = TrajectoryState.initial(q[0], p[0], "-")
    _, _, ad, Jd = ode_rhs(st0, ConstantVelocity(2.0, 2))
    Zd = z_from_jacobian(Jd)
    assert ad == pytest.approx(st0.a * 0.5 * np.trace(np.linalg.solve(st0.Z, Zd)), rel=1e-14)


def test_singular_z_is_reported():
    J = np.diag([1.0, -1.0])
    st0 = TrajectoryState(0.0, np.array([0.0]), np.array([1.0]), 1.0, J, Branch.PLUS)
    with pytest.raises(SingularZ):
        ode_rhs(st0, C1)


def test_evolve_constant_speed_translation():
    s = evolve((0.0, -1.0), "+", C1, 0.5, 1e-4)
    assert s.Q[0] == pytest.approx(-0.5, abs=1e-13)
    assert s.P[0] == -1.0
    assert s.a == pytest.approx(math.sqrt(2), abs=1e-13)
    assert s.det_z == pytest.approx(2.0, abs=1e-13)


def test_evolve_zero_time_is_identity():
    s = evolve(([0.3], [0.7]), "-", C2, 0.0)
    assert s.t == 0 and s.Q[0] == 0.3 and s.P[0] == 0.7 and s.a == math.sqrt(2)
    np.testing.assert_array_equal(s.J, np.eye(2))


def test_hamiltonian_conserved_along_variable_speed_ray():
    s = evolve((0.0, 1.0), "+", C2, 0.5, 1e-4)
    h0 = hamiltonian("+", C2, [0.0], [1.0])[0]
    assert abs(hamiltonian("+", C2, s.Q, s.P)[0] - h0) / abs(h0) <= 1e-10


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("branch", ["+", "-"])
def test_hamiltonian_conservation_property(d, branch, rng):
    field = SineSumVelocity(1.0, 0.25, d)
    q, p = _points(rng, 20, d)
    b = evolve_batch(q, p, branch, field, 1.0, 1e-4)
    s = float(Branch.parse(branch))
    H0 = s * field.c(q) * np.linalg.norm(p, axis=1)
    H1 = s * field.c(b.Q) * np.linalg.norm(b.P, axis=1)
    assert np.max(np.abs(H1 - H0) / np.abs(H0)) <= 1e-8


@pytest.mark.parametrize("d", [1, 2, 3])
def test_amplitude_tracks_det_z_times_speed_ratio(d, rng):
    # a^2 / det Z carries the factor (c(Q)/c(q))^2 when the speed varies
    field = SineSumVelocity(1.0, 0.25, d)
    q, p = _points(rng, 50, d)
    for branch in ("+", "-"):
        b = evolve_batch(q, p, branch, field, 0.5, 1e-3)
        ratio = b.a ** 2 / b.det_z * (field.c(q) / field.c(b.Q)) ** 2
        # a(0)^2 = 2^d = det Z(0)
        np.testing.assert_allclose(ratio, 1.0, rtol=1e-8)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_amplitude_squared_equals_det_z_for_constant_speed(d, rng):
    q, p = _points(rng, 30, d)
    for exact in (True, False):
        b = evolve_batch(q, p, "+", ConstantVelocity(1.3, d), 0.7, 1e-3, exact_constant=exact)
        np.testing.assert_allclose(b.a ** 2 / b.det_z, 1.0, rtol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_exact_constant_flow_matches_integrator(d, rng):
    q, p = _points(rng, 10, d)
    field = ConstantVelocity(0.8, d)
    for branch in ("+", "-"):
        a = evolve_batch(q, p, branch, field, 0.6, 1e-3, exact_constant=True)
        b = evolve_batch(q, p, branch, field, 0.6, 1e-3, exact_constant=False)
        for name in ("Q", "P", "a", "J", "Qdot", "Pdot", "adot"):
            np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12, err_msg=name)


def test_branch_symmetry_for_constant_speed(rng):
    q, p = _points(rng, 10, 2)
    c = 1.7
    b = evolve_batch(q, p, "-", ConstantVelocity(c, 2), 0.4, 1e-3, exact_constant=False)
    np.testing.assert_allclose(b.Q, q - 0.4 * c * p / np.linalg.norm(p, axis=1)[:, None], atol=1e-13)
    np.testing.assert_allclose(b.P, p, atol=1e-15)


def _final_state(q, p, dt, t=1.0):
    b = evolve_batch(np.array([q]), np.array([p]), "+", SineSumVelocity(1.0, 0.25, 1), t, dt)
    return np.concatenate([b.Q[0], b.P[0], [b.a[0].real, b.a[0].imag]])


def test_integrator_is_fourth_order():
    ref = _final_state([0.2], [0.6], 1e-6)
    dts = [0.05, 0.025, 0.0125]
    errs = [np.max(np.abs(_final_state([0.2], [0.6], h) - ref)) for h in dts]
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(order - 4.0) <= 0.2


@pytest.mark.parametrize("d", [1, 2])
def test_jacobian_matches_finite_differences(d, rng):
    field = SineSumVelocity(1.0, 0.25, d)
    q, p = _points(rng, 5, d)
    e = 1e-5
    for j in range(q.shape[0]):
        b = evolve_batch(q[j:j + 1], p[j:j + 1], "-", field, 0.5, 1e-3)
        fd = np.zeros((2 * d, 2 * d))
        for m in range(2 * d):
            dz = e * np.eye(2 * d)[m]
            plus = evolve_batch(q[j:j + 1] + dz[:d], p[j:j + 1] + dz[d:], "-", field, 0.5, 1e-3)
            minus = evolve_batch(q[j:j + 1] - dz[:d], p[j:j + 1] - dz[d:], "-", field, 0.5, 1e-3)
            fd[:, m] = (np.concatenate([plus.Q[0], plus.P[0]]) - np.concatenate([minus.Q[0], minus.P[0]])) / (2 * e)
        assert np.linalg.norm(fd - b.J[0]) / np.linalg.norm(b.J[0]) <= 1e-4


def test_compiled_and_generic_paths_agree(rng):
    q, p = _points(rng, 8, 2)
    builtin = SineSumVelocity(1.0, 0.25, 2)
    generic = CustomVelocity(builtin.c, 0.75, 2, builtin.grad, builtin.hess)
    for branch in ("+", "-"):
        a = evolve_batch(q, p, branch, builtin, 0.3, 1e-3)
        b = evolve_batch(q, p, branch, generic, 0.3, 1e-3)
        for name in ("Q", "P", "a", "J", "adot"):
            np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=1e-12, atol=1e-13)


def test_partial_final_step():
    s = evolve((0.0, 1.0), "+", C1, 0.50005, 1e-4)
    assert s.t == pytest.approx(0.50005)
    assert s.Q[0] == pytest.approx(0.50005, abs=1e-13)


def test_literal_momentum_sign_agrees_on_plus_branch_only(rng):
    q, p = _points(rng, 5, 1)
    plus_h = evolve_batch(q, p, "+", C2, 0.5, 1e-3)
    plus_l = evolve_batch(q, p, "+", C2, 0.5, 1e-3, momentum_sign="literal")
    np.testing.assert_array_equal(plus_h.Q, plus_l.Q)
    minus_h = evolve_batch(q, p, "-", C2, 0.5, 1e-3)
    minus_l = evolve_batch(q, p, "-", C2, 0.5, 1e-3, momentum_sign="literal")
    assert np.max(np.abs(minus_h.P - minus_l.P)) > 1e-3
    H0 = C2.c(q) * np.linalg.norm(p, axis=1)
    drift = np.abs(C2.c(minus_l.Q) * np.linalg.norm(minus_l.P, axis=1) - H0) / H0
    assert np.max(drift) > 1e-3


def test_unknown_momentum_sign_rejected():
    with pytest.raises(ConfigError):
        evolve_batch([[0.0]], [[1.0]], "+", C2, 0.1, 1e-3, momentum_sign="other")


def test_zero_initial_momentum_rejected():
    with pytest.raises(MomentumUnderflow) as exc:
        evolve_batch([[0.0]], [[0.0]], "+", C2, 0.1, 1e-3)
    assert exc.value.time == 0.0


def test_trajectory_history_rows():
    rows = trajectory_history(([0.1], [1.0]), "+", C2, 0.5, 1e-3, stride=100)
    assert rows.shape == (6, 7)
    assert rows[0, 0] == 0.0 and rows[-1, 0] == pytest.approx(0.5)
    s = evolve(([0.1], [1.0]), "+", C2, 0.5, 1e-3)
    np.testing.assert_allclose(rows[-1, 1:3], [s.Q[0], s.P[0]], rtol=1e-14)
    np.testing.assert_allclose(rows[-1, 5] + 1j * rows[-1, 6], s.det_z, rtol=1e-12)


@given(q=st.floats(-2, 2), p=st.floats(0.2, 3.0), sign=st.sampled_from([-1.0, 1.0]),
       branch=st.sampled_from(["+", "-"]))
def test_state_invariants_after_evolution(q, p, sign, branch):
    s = evolve(([q], [sign * p]), branch, C2, 0.25, 1e-3)
    assert np.linalg.norm(s.P) > 1e-8
    assert abs(s.det_z) > 0
    assert np.all(np.isfinite(s.J))
