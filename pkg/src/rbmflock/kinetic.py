"""Finite-difference solver for the gPC system of the homogeneous alignment equation

    d/dt f_h = d/dv [ (v - u) sum_k H_hk f_k ],   h = 0..M,

with H_hk = E[K(theta) Phi_h Phi_k]. Central differences on the flux, RK4 in
time, zero flux through the ends of the truncated velocity interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalFailure
from .gpc import GpcBasis, Quadrature
from .integrators import rk4_step

# stability limit of classical RK4 on the imaginary axis
RK4_IMAG_LIMIT = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class VelocityGrid:
    v_min: float = -3.0
    v_max: float = 3.0
    dv: float = 1e-2

    def __post_init__(self):
        if not (self.v_max > self.v_min and self.dv > 0):
            raise ConfigurationError("velocity grid needs v_max > v_min and dv > 0")
        n = (self.v_max - self.v_min) / self.dv
        if abs(n - round(n)) > 1e-8 * n:
            raise ConfigurationError("dv must tile [v_min, v_max] exactly")

    @property
    def n_cells(self) -> int:
        return int(round((self.v_max - self.v_min) / self.dv))

    @property
    def centers(self) -> np.ndarray:
        return self.v_min + (np.arange(self.n_cells) + 0.5) * self.dv

    @property
    def edges(self) -> np.ndarray:
        return self.v_min + np.arange(self.n_cells + 1) * self.dv


@dataclass
class GpcDensity:
    grid: VelocityGrid
    coeffs: np.ndarray  # (M+1, n_cells)
    time: float = 0.0

    def mass(self) -> float:
        return float(self.coeffs[0].sum() * self.grid.dv)

    def momentum(self) -> float:
        return float(np.dot(self.grid.centers, self.coeffs[0]) * self.grid.dv)

    def mean_velocity(self) -> float:
        return self.momentum() / self.mass()


def affine(base, slope):
    return lambda theta: base + slope * np.asarray(theta, dtype=float)


def assemble_H(kfun, basis: GpcBasis, quad: Quadrature) -> np.ndarray:
    """H_hk = int K(theta) Phi_h Phi_k dpi, by quadrature."""
    phi = basis(quad.nodes)
    kq = np.broadcast_to(np.asarray(kfun(quad.nodes), dtype=float), quad.nodes.shape)
    H = (phi * (quad.weights * kq)[:, None]).T @ phi
    return 0.5 * (H + H.T)


def _rhs_factory(grid: VelocityGrid, H):
    v = grid.centers
    inv2dv = 1.0 / (2.0 * grid.dv)

    def rhs(f):
        u = np.dot(v, f[0]) / f[0].sum()
        flux = (v - u) * (H @ f)
        padded = np.zeros((f.shape[0], f.shape[1] + 2))
        padded[:, 1:-1] = flux
        return (padded[:, 2:] - padded[:, :-2]) * inv2dv

    return rhs


def cfl_number(grid: VelocityGrid, H, dt, u=0.0) -> float:
    speed = max(abs(grid.v_max - u), abs(grid.v_min - u)) * np.linalg.norm(H, 2)
    return float(speed * dt / grid.dv)


def fgpc_solve(grid: VelocityGrid, H, f0, dt: float, T: float, record_every: int = 1):
    """Integrate the gPC density system; returns the list of recorded GpcDensity states.

    ``f0`` is either a density on the grid (deterministic initial data, placed
    in mode 0) or an (M+1, n_cells) coefficient array.
    """
    H = np.asarray(H, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    n_modes = H.shape[0]
    if f0.ndim == 1:
        coeffs = np.zeros((n_modes, grid.n_cells))
        coeffs[0] = f0
    else:
        coeffs = f0.copy()
    if coeffs.shape != (n_modes, grid.n_cells):
        raise ConfigurationError("initial density does not match grid/H shape")
    u0 = np.dot(grid.centers, coeffs[0]) / coeffs[0].sum()
    cfl = cfl_number(grid, H, dt, u0)
    if cfl > RK4_IMAG_LIMIT:
        raise ConfigurationError(f"CFL number {cfl:.3f} exceeds RK4 limit {RK4_IMAG_LIMIT:.3f}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError("T must be a multiple of dt")
    rhs = _rhs_factory(grid, H)
    out = [GpcDensity(grid, coeffs.copy(), 0.0)]
    for k in range(n_steps):
        coeffs = rk4_step(rhs, coeffs, dt)
        if not np.all(np.isfinite(coeffs)):
            raise NumericalFailure("non-finite density", k)
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            out.append(GpcDensity(grid, coeffs.copy(), (k + 1) * dt))
    return out


def expected_temperature(density: GpcDensity) -> float:
    """int (v - u)^2 f dv dpi; orthonormality leaves only mode 0."""
    f = density.coeffs[0]
    if f.sum() == 0:
        raise ConfigurationError("empty density")
    v = density.grid.centers
    u = np.dot(v, f) / f.sum()
    return float(np.sum((v - u) ** 2 * f) * density.grid.dv)


def bimodal_density(grid: VelocityGrid, mu=0.5, sigma2=0.1) -> np.ndarray:
    """Normalised two-Gaussian mixture centred at +/- mu, evaluated at the cell centres."""
    v = grid.centers
    f = np.exp(-((v - mu) ** 2) / (2 * sigma2)) + np.exp(-((v + mu) ** 2) / (2 * sigma2))
    return f / (f.sum() * grid.dv)
