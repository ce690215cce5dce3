import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fgs_wave.errors import ConfigError, GridTooCoarse, NonInjectivePhase, NonPositiveVelocity, NotNormalized
from fgs_wave.model import (ConstantVelocity, CustomAmplitude, CustomPhase, CustomVelocity, GaussianAmplitude,
                            GaussianInitialData, Grid, PolynomialGaussianAmplitude, QuadraticPhase,
                            SineSumVelocity, WKBInitialData, eval_velocity, validate_initial_data)

coords = st.floats(-3.0, 3.0, allow_nan=False)


def test_constant_velocity_values():
    c, g, h = eval_velocity(ConstantVelocity(1.0, 2), np.array([0.3, -7.0]))
    assert float(np.squeeze(c)) == 1.0
    assert np.all(g == 0) and np.all(h == 0)


def test_sine_sum_1d_at_origin():
    c, g, h = eval_velocity(SineSumVelocity(1.0, 0.25, 1), np.array([0.0]))
    assert float(np.squeeze(c)) == pytest.approx(1.0, abs=1e-15)
    assert np.squeeze(g) == pytest.approx(0.25, abs=1e-15)
    assert np.squeeze(h) == pytest.approx(0.0, abs=1e-15)


def test_sine_sum_2d_hand_values():
    field = SineSumVelocity(1.0, 0.25, 2)
    x = np.array([math.pi / 2, 0.0])
    c, g, h = eval_velocity(field, x)
    assert float(np.squeeze(c)) == pytest.approx(1.25, abs=1e-15)
    np.testing.assert_allclose(np.reshape(g, 2), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(np.reshape(h, (2, 2)), -0.25 * np.ones((2, 2)), atol=1e-15)
    # central differences of c
    e = 1e-5
    fd = [(field.c(x + e * np.eye(2)[j]) - field.c(x - e * np.eye(2)[j])) / (2 * e) for j in range(2)]
    np.testing.assert_allclose(np.ravel(fd), [0.0, 0.0], atol=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
@given(data=st.data())
def test_builtin_derivatives_match_finite_differences(d, data):
    x = np.array(data.draw(st.lists(coords, min_size=d, max_size=d)))
    field = SineSumVelocity(1.0, 0.25, d)
    e = 1e-5
    g = np.reshape(field.grad(x), d)
    h = np.reshape(field.hess(x), (d, d))
    for j in range(d):
        dx = e * np.eye(d)[j]
        fd_g = (float(np.squeeze(field.c(x + dx))) - float(np.squeeze(field.c(x - dx)))) / (2 * e)
        assert fd_g == pytest.approx(g[j], rel=1e-6, abs=1e-9)
        fd_h = (np.reshape(field.grad(x + dx), d) - np.reshape(field.grad(x - dx), d)) / (2 * e)
        np.testing.assert_allclose(fd_h, h[:, j], rtol=1e-6, atol=1e-9)
    assert np.max(np.abs(h - h.T)) <= 1e-12


def test_custom_velocity_finite_difference_fallback():
    field = CustomVelocity(lambda x: 2.0 + 0.1 * np.sum(x ** 2, axis=-1), c_inf=1.0, dim=2)
    x = np.array([0.4, -0.2])
    np.testing.assert_allclose(np.reshape(field.grad(x), 2), 0.2 * x, rtol=1e-6)
    np.testing.assert_allclose(np.reshape(field.hess(x), (2, 2)), 0.2 * np.eye(2), rtol=1e-4, atol=1e-5)


def test_non_positive_velocity_raises():
    field = CustomVelocity(lambda x: np.sin(x[..., 0]), c_inf=0.1, dim=1)
    with pytest.raises(NonPositiveVelocity):
        eval_velocity(field, np.array([-1.0]))


def test_gaussian_data_normalization():
    rep = validate_initial_data(GaussianInitialData(512.0, (0.0,), (-1.0,), (2.0,)))
    assert rep.residual < 1e-6


def test_linear_gradient_phase_is_injective():
    data = WKBInitialData(512.0, GaussianAmplitude((50.0,), (0.0,)), QuadraticPhase.centered((0.5,)))
    rep = validate_initial_data(data)
    assert rep.residual < 1e-6
    assert rep.injective
    np.testing.assert_allclose(np.ravel(data.phase.grad(np.array([[0.0], [1.0]]))), [-1.0, 1.0])


def test_sine_phase_is_rejected():
    phase = CustomPhase(lambda y: np.sin(y[..., 0]), lambda y: np.cos(y),
                        lambda y: -np.sin(y)[..., None], dim=1)
    # width 9 puts the 6-sigma support at [-2, 2], where cos changes sign
    amp = GaussianAmplitude((9.0,), (0.0,))
    with pytest.raises(NonInjectivePhase):
        validate_initial_data(WKBInitialData(64.0, amp, phase))


def test_unnormalized_amplitude_raises():
    amp = CustomAmplitude(lambda y: np.exp(-y[..., 0] ** 2), (0.0,), (0.5,))
    with pytest.raises(NotNormalized):
        validate_initial_data(WKBInitialData(64.0, amp, QuadraticPhase.centered((0.5,))))


def test_polynomial_amplitude_is_normalized():
    amp = PolynomialGaussianAmplitude((0.0, 0.0, 1.0), 50.0)
    # normalization of x^2 exp(-50 x^2): 2/sqrt(3) pi^(-1/4) 100^(5/4)
    assert amp.norm == pytest.approx(2 / math.sqrt(3) * math.pi ** -0.25 * 100 ** 1.25, rel=1e-12)
    x = np.linspace(-1, 1, 20001)
    assert np.trapezoid(amp(x[:, None]) ** 2, x) == pytest.approx(1.0, abs=1e-10)


def test_gaussian_data_rejects_zero_momentum():
    with pytest.raises(ConfigError):
        GaussianInitialData(64.0, (0.0,), (0.0,), (2.0,))


@given(k=st.floats(32.0, 2048.0), lo=st.floats(-2.0, 0.0), width=st.floats(0.5, 3.0),
       ppw=st.sampled_from([4, 8, 12]))
def test_grid_construction_respects_resolution(k, lo, width, ppw):
    g = Grid.for_box((lo,), (lo + width,), k, ppw)
    assert max(g.spacing) <= 2 * math.pi / (ppw * k) * (1 + 1e-12)
    assert min(g.shape) >= 32


def test_too_coarse_grid_cannot_be_built():
    with pytest.raises(GridTooCoarse):
        Grid((-1.0,), (1.0,), (64,), 512.0)
    with pytest.raises(ConfigError):
        Grid((-1.0,), (1.0,), (16,), 1.0)


def test_grid_weights_integrate_constants():
    g = Grid.for_box((-1.0, 0.0), (1.0, 0.5), 64.0)
    w = g.weights()
    assert np.sum(w[0]) == pytest.approx(2.0, rel=1e-13)
    assert np.sum(w[1]) == pytest.approx(0.5, rel=1e-13)
