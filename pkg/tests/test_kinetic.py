import math

import numpy as np
import pytest

from rbmflock.errors import ConfigurationError
from rbmflock.gpc import RandomParamSpec, build_basis, default_quadrature, quadrature
from rbmflock.kinetic import (
    RK4_IMAG_LIMIT,
    VelocityGrid,
    affine,
    assemble_H,
    bimodal_density,
    cfl_number,
    expected_temperature,
    fgpc_solve,
)

UNIT = RandomParamSpec("uniform", 0.0, 1.0)


def closed_form_temperature(t, var0=0.35, base=0.5, slope=0.01):
    # E_theta[var0 * exp(-2 K(theta) t)], theta ~ U(0, 1)
    s = 2 * slope * t
    return var0 * math.exp(-2 * base * t) * (-math.expm1(-s) / s)


def test_closed_form_value():
    assert closed_form_temperature(0.5) == pytest.approx(0.21122, abs=1e-5)


def test_constant_H_is_scaled_identity():
    basis = build_basis(UNIT, 3)
    H = assemble_H(affine(0.7, 0.0), basis, default_quadrature(basis))
    np.testing.assert_allclose(H, 0.7 * np.eye(4), atol=1e-14)


def test_affine_H_entries():
    basis = build_basis(UNIT, 3)
    H = assemble_H(affine(0.5, 0.01), basis, quadrature(UNIT, 2))
    assert H[0, 0] == pytest.approx(0.505, rel=1e-14)
    assert H[0, 1] == pytest.approx(0.01 / (2 * math.sqrt(3)), rel=1e-12)
    assert H[0, 1] == pytest.approx(0.0028868, abs=1e-7)
    assert np.array_equal(H, H.T)


def test_grid_tiling():
    g = VelocityGrid(-3, 3, 1e-2)
    assert g.n_cells == 600 and g.centers[0] == pytest.approx(-2.995)
    with pytest.raises(ConfigurationError):
        VelocityGrid(-3, 3, 0.007)


def test_delta_at_mean_is_stationary():
    g = VelocityGrid(-1, 1, 0.01)
    f0 = np.zeros(g.n_cells)
    f0[100] = 1 / g.dv  # cell centred at v = 0.005
    H = np.array([[0.5]])
    out = fgpc_solve(g, H, f0, 0.01, 0.5)[-1]
    # only the neighbour fluxes of a centred scheme move mass; with v - u = 0 in that cell nothing moves
    np.testing.assert_allclose(out.coeffs[0], f0, atol=1e-12)


def test_deterministic_relaxation_rate():
    g = VelocityGrid(-3, 3, 1e-2)
    f0 = bimodal_density(g)
    traj = fgpc_solve(g, np.array([[0.5]]), f0, 1e-2, 0.5)
    T0 = expected_temperature(traj[0])
    T1 = expected_temperature(traj[-1])
    assert T1 == pytest.approx(T0 * math.exp(-0.5), rel=1e-2)


def test_reference_temperature_and_mass():
    g = VelocityGrid(-3, 3, 1e-2)
    basis = build_basis(UNIT, 3)
    H = assemble_H(affine(0.5, 0.01), basis, default_quadrature(basis))
    traj = fgpc_solve(g, H, bimodal_density(g), 1e-2, 0.5)
    assert expected_temperature(traj[-1]) == pytest.approx(closed_form_temperature(0.5), rel=1e-2)
    masses = [d.mass() for d in traj]
    assert max(masses) - min(masses) <= 1e-8
    mom = [d.momentum() for d in traj]
    assert max(np.abs(np.diff(mom))) <= 1e-6 * 1e-2


def test_refinement_does_not_degrade():
    basis = build_basis(UNIT, 3)
    H = assemble_H(affine(0.5, 0.01), basis, default_quadrature(basis))
    errs = []
    for dv in (4e-2, 2e-2, 1e-2):
        g = VelocityGrid(-3, 3, dv)
        T = expected_temperature(fgpc_solve(g, H, bimodal_density(g), 1e-2, 0.5)[-1])
        errs.append(abs(T - closed_form_temperature(0.5)))
    assert errs[-1] <= errs[0] + 1e-12


def test_cfl_violation_rejected():
    g = VelocityGrid(-3, 3, 1e-2)
    H = np.array([[5.0]])
    assert cfl_number(g, H, 0.01) > RK4_IMAG_LIMIT
    with pytest.raises(ConfigurationError):
        fgpc_solve(g, H, bimodal_density(g), 0.01, 0.1)


def test_shape_mismatch_rejected():
    g = VelocityGrid(-1, 1, 0.1)
    with pytest.raises(ConfigurationError):
        fgpc_solve(g, np.eye(2), np.ones((3, g.n_cells)), 0.01, 0.1)


def test_record_every():
    g = VelocityGrid(-1, 1, 0.05)
    traj = fgpc_solve(g, np.eye(1) * 0.5, bimodal_density(g), 0.01, 0.1, record_every=5)
    assert [round(d.time, 10) for d in traj] == [0.0, 0.05, 0.1]


def test_empty_density_rejected():
    g = VelocityGrid(-1, 1, 0.1)
    from rbmflock.kinetic import GpcDensity

    with pytest.raises(ConfigurationError):
        expected_temperature(GpcDensity(g, np.zeros((1, g.n_cells))))
