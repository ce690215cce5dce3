import math

import numpy as np
import pytest

from fgs_wave.errors import CFLViolation, DomainTooSmall
from fgs_wave.model import ConstantVelocity, GaussianInitialData, Grid, SineSumVelocity
from fgs_wave.reconstruction import energy_norm, energy_norm_diff
from fgs_wave.reference import (ReferenceConfig, SpectralState, advance, check_boundary, default_dt, exact_constant_gaussian,
                                initial_state, reference_grid, solve_reference, spectral_energy, spectral_step)

K = 64.0
DATA = GaussianInitialData(K, (0.0,), (-1.0,), (2.0,))
C1 = ConstantVelocity(1.0)
C2 = SineSumVelocity(1.0, 0.25, 1)


def _periodic(n=256, k=16.0):
    return Grid((0.0,), (2 * math.pi,), (n,), k, periodic=True)


def test_plane_wave_translates():
    grid = _periodic()
    x = grid.axes()[0]
    k = 16.0
    st = SpectralState(grid, np.exp(1j * k * x), -1j * k * np.exp(1j * k * x), 0.0, np.ones(grid.shape))
    out = advance(st, 0.5, 1e-3)
    np.testing.assert_allclose(out.u, np.exp(1j * k * (x - 0.5)), atol=1e-8)
    np.testing.assert_allclose(out.v, -1j * k * np.exp(1j * k * (x - 0.5)), atol=1e-8 * k)


def test_zero_data_stays_zero():
    grid = _periodic()
    z = np.zeros(grid.shape, complex)
    out = advance(SpectralState(grid, z, z, 0.0, np.ones(grid.shape)), 0.3, 1e-2)
    assert np.all(out.u == 0) and np.all(out.v == 0)


def _energy_drift(ppw, dt=None):
    box = reference_grid(DATA, C2, 0.5, ppw=ppw)
    st = initial_state(DATA, C2, box)
    e0 = spectral_energy(st)
    out = advance(st, 0.5, dt or 0.25 * box.spacing[0] / 1.25)
    return abs(spectral_energy(out) - e0) / e0


def test_energy_is_conserved_for_variable_speed():
    # CFL 0.25 on a 16 points-per-wavelength box
    assert _energy_drift(16) < 1e-6
    # the default step also controls the RK4 phase error on the coarser default box
    box = reference_grid(DATA, C2, 0.5)
    assert _energy_drift(8, default_dt(DATA, C2, box)) < 1e-9


def test_cfl_limit_is_enforced():
    box = reference_grid(DATA, C2, 0.5)
    st = initial_state(DATA, C2, box)
    with pytest.raises(CFLViolation):
        spectral_step(st, 0.6 * box.spacing[0] / 1.25)


def test_small_box_is_detected():
    box = Grid((-0.3,), (0.3,), (64,), K, periodic=True)
    with pytest.raises(DomainTooSmall):
        check_boundary(initial_state(DATA, C1, box))


def test_time_zero_returns_initial_data():
    grid = Grid.for_box((-1.0,), (1.0,), K)
    f = solve_reference(ReferenceConfig(DATA, C2, 0.0, grid))
    x = grid.mesh()
    np.testing.assert_allclose(f.u, DATA.f0(x), atol=1e-10)
    np.testing.assert_allclose(f.du_dt, DATA.f1(x), atol=1e-10 * K)


def test_packet_splits_into_two_pulses():
    grid = Grid.for_box((-1.0,), (1.0,), K)
    t = 0.5
    f = solve_reference(ReferenceConfig(DATA, C1, t, grid))
    x = grid.axes()[0]
    env = np.abs(f.u)
    left = x[np.argmax(np.where(x < 0, env, 0))]
    right = x[np.argmax(np.where(x > 0, env, 0))]
    assert right - left == pytest.approx(2 * t, abs=2 * (x[1] - x[0]))


def test_matches_dalembert_solution():
    grid = Grid.for_box((-1.0,), (1.0,), K)
    f = solve_reference(ReferenceConfig(DATA, C1, 0.5, grid))
    ex = exact_constant_gaussian(DATA, 1.0, 0.5, grid)
    err = abs(energy_norm_diff(f, ex).value)
    assert err < 1e-6 * energy_norm(ex).value


def test_time_step_convergence():
    grid = Grid.for_box((-1.0,), (1.0,), K)
    box = reference_grid(DATA, C2, 0.5, grid)
    a = solve_reference(ReferenceConfig(DATA, C2, 0.5, grid, box=box))
    b = solve_reference(ReferenceConfig(DATA, C2, 0.5, grid, dt=a.meta["dt"] / 2, box=box))
    assert energy_norm_diff(a, b).value < 1e-8 * energy_norm(b).value


def test_spatial_convergence():
    grid = Grid.for_box((-1.0,), (1.0,), K)
    a = solve_reference(ReferenceConfig(DATA, C2, 0.5, grid))
    b = solve_reference(ReferenceConfig(DATA, C2, 0.5, grid, ppw=16, dt=a.meta["dt"]))
    assert energy_norm_diff(a, b).value < 1e-8 * energy_norm(b).value
