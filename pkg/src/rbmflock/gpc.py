"""Legendre chaos for uniform random parameters and the batched RBM-gPC stepper.

Coefficient arrays are laid out as (N, K+1, d): particle, chaos mode, space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

from .errors import ConfigurationError
from .integrators import StepperSpec
from .kernels import KernelSpec, psi
from .particles import BatchPlan, evolve_batches


@dataclass(frozen=True)
class RandomParamSpec:
    distribution: str = "uniform"
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if self.distribution != "uniform":
            raise ConfigurationError(f"unsupported distribution {self.distribution!r}")
        if not self.a < self.b:
            raise ConfigurationError("uniform(a, b) needs a < b")

    @property
    def support(self):
        return (self.a, self.b)

    def to_unit(self, theta):
        return 2.0 * (np.asarray(theta, dtype=float) - self.a) / (self.b - self.a) - 1.0


@dataclass(frozen=True)
class GpcBasis:
    order: int
    param: RandomParamSpec

    @property
    def normalization(self) -> np.ndarray:
        """Scale factors sqrt(2k+1) turning P_k into an orthonormal family."""
        return np.sqrt(2.0 * np.arange(self.order + 1) + 1.0)

    @property
    def n_modes(self) -> int:
        return self.order + 1

    def __call__(self, theta) -> np.ndarray:
        """Phi_k(theta) for k = 0..K, shape theta.shape + (K+1,)."""
        xi = self.param.to_unit(theta)
        return legendre.legvander(xi, self.order) * self.normalization


def build_basis(param: RandomParamSpec, order: int) -> GpcBasis:
    if order < 0:
        raise ConfigurationError("gPC order must be >= 0")
    return GpcBasis(order=int(order), param=param)


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray  # sum to one: expectations under the parameter law

    def __len__(self):
        return self.nodes.size


def quadrature(param: RandomParamSpec, q_order: int) -> Quadrature:
    """Gauss-Legendre rule mapped to [a, b] with probability weights."""
    if q_order < 1:
        raise ConfigurationError("quadrature order must be >= 1")
    xi, w = legendre.leggauss(q_order)
    nodes = param.a + 0.5 * (param.b - param.a) * (xi + 1.0)
    return Quadrature(nodes=nodes, weights=w / w.sum())


def default_quadrature(basis: GpcBasis) -> Quadrature:
    return quadrature(basis.param, basis.order + 3)


def gram_matrix(basis: GpcBasis, quad: Quadrature | None = None) -> np.ndarray:
    quad = quad or quadrature(basis.param, basis.order + 2)
    phi = basis(quad.nodes)
    return (phi * quad.weights[:, None]).T @ phi


@dataclass
class GpcEnsemble:
    xhat: np.ndarray  # (N, K+1, d)
    vhat: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.xhat = np.ascontiguousarray(self.xhat, dtype=np.float64)
        self.vhat = np.ascontiguousarray(self.vhat, dtype=np.float64)
        if self.xhat.ndim != 3 or self.xhat.shape != self.vhat.shape:
            raise ConfigurationError("xhat and vhat must both be (N, K+1, d) arrays")
        if not (np.all(np.isfinite(self.xhat)) and np.all(np.isfinite(self.vhat))):
            raise ConfigurationError("gPC ensemble contains non-finite entries")

    @property
    def n(self):
        return self.xhat.shape[0]

    @property
    def order(self):
        return self.xhat.shape[1] - 1

    @property
    def dim(self):
        return self.xhat.shape[2]

    @classmethod
    def from_samples(cls, positions, velocities, order, time=0.0):
        """Deterministic initial data: everything in mode 0."""
        positions = np.asarray(positions, dtype=np.float64)
        velocities = np.asarray(velocities, dtype=np.float64)
        n, d = positions.shape
        xhat = np.zeros((n, order + 1, d))
        vhat = np.zeros((n, order + 1, d))
        xhat[:, 0] = positions
        vhat[:, 0] = velocities
        return cls(xhat, vhat, time)

    def evaluate(self, basis: GpcBasis, theta):
        """Positions and velocities at the given theta values, shape (N, n_theta, d)."""
        phi = basis(np.atleast_1d(theta))  # (n_theta, K+1)
        x = np.einsum("tk,nkd->ntd", phi, self.xhat)
        v = np.einsum("tk,nkd->ntd", phi, self.vhat)
        return x, v

    def mode_momentum(self) -> np.ndarray:
        """sum_i vhat_i per mode, shape (K+1, d)."""
        return self.vhat.sum(axis=0)

    def state(self):
        return np.stack([self.xhat, self.vhat])


def _pair_products(phi):
    """PP[q, l, k] = Phi_l(theta_q) Phi_k(theta_q); exactly symmetric in (l, k)."""
    return phi[:, :, None] * phi[:, None, :]


def pair_coeffs(xi_hat, xj_hat, spec: KernelSpec, basis: GpcBasis, quad: Quadrature) -> np.ndarray:
    """e_{lk} = int psi(|x_j(theta) - x_i(theta)|, theta) Phi_k Phi_l dpi by quadrature."""
    xi_hat = np.asarray(xi_hat, dtype=np.float64)
    xj_hat = np.asarray(xj_hat, dtype=np.float64)
    phi = basis(quad.nodes)
    xi = phi @ xi_hat
    xj = phi @ xj_hat
    r = np.sqrt(np.sum((xj - xi) ** 2, axis=-1))
    c = quad.weights * psi(spec, r, quad.nodes if spec.is_stochastic else None)
    pp = _pair_products(phi)
    e = np.zeros((basis.n_modes, basis.n_modes))
    for q in range(len(quad)):
        e += c[q] * pp[q]
    return e


@dataclass
class GpcStepper:
    """Precomputed basis tables for the batched gPC right-hand side."""

    spec: KernelSpec
    basis: GpcBasis
    quad: Quadrature
    stepper: StepperSpec = field(default_factory=StepperSpec)
    frozen_coeffs: bool = False

    def __post_init__(self):
        self.phi = self.basis(self.quad.nodes)  # (Q, L)
        self.pp = _pair_products(self.phi)  # (Q, L, L)
        self.thetas = self.quad.nodes if self.spec.is_stochastic else None
        # a constant-family kernel gives the same e_{lk} for every pair
        self.uniform_e = None
        if self.spec.family == "constant":
            c = psi(self.spec, np.zeros(len(self.quad)), self.thetas) * self.quad.weights
            self.uniform_e = np.zeros(self.pp.shape[1:])
            for q in range(len(self.quad)):
                self.uniform_e += c[q] * self.pp[q]

    def _uniform_velocity_rhs(self, vb, coef):
        # sum_j (v_jk - v_ik) = S_k - p v_ik, then contract with the shared e
        p = vb.shape[-3]
        rel = vb.sum(axis=-3, keepdims=True) - p * vb
        dv = np.zeros_like(vb)
        for k in range(self.basis.n_modes):
            dv += self.uniform_e[:, k, None] * rel[..., k, None, :]
        return coef * dv

    def coefficients(self, xb):
        """e^{ij}_{lk} for every pair in every batch: (..., p, p, L, L) from (..., p, L, d)."""
        # positions at the quadrature nodes: (..., p, Q, d)
        xq = np.zeros(xb.shape[:-2] + (len(self.quad), xb.shape[-1]))
        for k in range(self.basis.n_modes):
            xq += self.phi[:, k][:, None] * xb[..., k, None, :]
        diff = xq[..., None, :, :, :] - xq[..., :, None, :, :]  # x_j - x_i, (..., p, p, Q, d)
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        c = psi(self.spec, r, self.thetas) * self.quad.weights
        e = np.zeros(r.shape[:-1] + self.pp.shape[1:])
        for q in range(len(self.quad)):
            e += c[..., q, None, None] * self.pp[q]
        return e

    def velocity_rhs(self, xb, vb, coef, e=None):
        """d/dt vhat for batched coefficients xb, vb of shape (..., p, L, d)."""
        if e is None:
            e = self.coefficients(xb)
        L = self.basis.n_modes
        # sum_j sum_k e^{ij}_{lk} (v_jk - v_ik)
        dv = np.zeros_like(vb)
        for k in range(L):
            vk = vb[..., k, :]  # (..., p, d)
            rel = vk[..., None, :, :] - vk[..., :, None, :]  # v_jk - v_ik, (..., p, p, d)
            dv += np.sum(e[..., :, :, :, k, None] * rel[..., None, :], axis=-3)
        return coef * dv

    def evolve(self, block, p, tau, step_index=None):
        """Advance a (2, ..., p, L, d) block of independent batches by tau."""
        coef = self.spec.kappa / (p - 1)
        if self.basis.order == 0 and not self.spec.is_stochastic:
            # single-mode chaos with a theta-free kernel is plain RBM
            flat = block[..., 0, :]
            out = evolve_batches(flat, self.spec, p, self.stepper, tau, step_index=step_index)
            return out[..., None, :]
        if self.uniform_e is not None:

            def rhs(state):
                return np.stack([state[1], self._uniform_velocity_rhs(state[1], coef)])

            return self.stepper.advance(rhs, block, tau, step_index)
        frozen = self.coefficients(block[0]) if self.frozen_coeffs else None

        def rhs(state):
            return np.stack([state[1], self.velocity_rhs(state[0], state[1], coef, frozen)])

        return self.stepper.advance(rhs, block, tau, step_index)


def rbm_gpc_step(ens: GpcEnsemble, plan: BatchPlan, gstep: GpcStepper, tau: float) -> GpcEnsemble:
    """One RBM interval on the gPC coefficient system."""
    if plan.n != ens.n:
        raise ConfigurationError(f"plan is for N={plan.n}, ensemble has N={ens.n}")
    idx = plan.batches
    state = ens.state()
    block = gstep.evolve(state[:, idx], plan.p, tau, plan.step_index)
    out = np.empty_like(state)
    out[:, idx] = block
    return GpcEnsemble(out[0], out[1], ens.time + tau)


@dataclass(frozen=True)
class PhaseGrid:
    lows: tuple
    highs: tuple
    cells: tuple

    def __post_init__(self):
        if not (len(self.lows) == len(self.highs) == len(self.cells)):
            raise ConfigurationError("grid bounds and cell counts must have equal length")
        for lo, hi, c in zip(self.lows, self.highs, self.cells):
            if not hi > lo or int(c) != c or c < 1:
                raise ConfigurationError("grid needs high > low and positive integer cell counts")

    @classmethod
    def uniform(cls, low, high, cells, n_axes):
        return cls((float(low),) * n_axes, (float(high),) * n_axes, (int(cells),) * n_axes)

    @property
    def h(self) -> np.ndarray:
        return (np.array(self.highs) - np.array(self.lows)) / np.array(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def edges(self):
        return [np.linspace(lo, hi, c + 1) for lo, hi, c in zip(self.lows, self.highs, self.cells)]

    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges()]


@dataclass
class Histogram:
    grid: PhaseGrid
    density: np.ndarray
    outside_mass: float = 0.0

    def mass(self) -> float:
        return float(self.density.sum() * self.grid.cell_volume)


def histogram(points, grid: PhaseGrid, weights=None) -> Histogram:
    """Density histogram of weighted points; weights default to 1/len(points)."""
    points = np.asarray(points, dtype=np.float64)
    if weights is None:
        weights = np.full(points.shape[0], 1.0 / points.shape[0])
    counts, _ = np.histogramdd(points, bins=grid.edges(), weights=weights)
    inside = counts.sum()
    return Histogram(grid, counts / grid.cell_volume, max(0.0, float(np.sum(weights) - inside)))


def reconstruct_expected_density(ens: GpcEnsemble, grid: PhaseGrid, basis: GpcBasis, quad: Quadrature, axes="xv") -> Histogram:
    """Quadrature average over theta of the particle histogram of (x(theta), v(theta)).

    ``axes`` picks the phase-space coordinates: "xv" (full), "x" or "v".
    """
    x, v = ens.evaluate(basis, quad.nodes)  # (N, Q, d)
    parts = {"x": [x], "v": [v], "xv": [x, v]}[axes]
    pts = np.concatenate(parts, axis=-1)
    if pts.shape[-1] != len(grid.cells):
        raise ConfigurationError(f"grid has {len(grid.cells)} axes, data has {pts.shape[-1]}")
    w = np.broadcast_to(quad.weights[None, :] / ens.n, pts.shape[:2])
    return histogram(pts.reshape(-1, pts.shape[-1]), grid, w.reshape(-1))


def smooth_histogram(hist: Histogram, bandwidth_cells: float = 1.0) -> Histogram:
    """Gaussian-smoothed copy for display; never feed this into metrics."""
    from scipy.ndimage import gaussian_filter

    return Histogram(hist.grid, gaussian_filter(hist.density, bandwidth_cells, mode="constant"), hist.outside_mass)


def expected_temperature_particles(ens: GpcEnsemble, basis: GpcBasis, quad: Quadrature) -> float:
    """sum_q w_q * (1/N) sum_i |v_i(theta_q) - mean_v(theta_q)|^2."""
    _, v = ens.evaluate(basis, quad.nodes)
    centered = v - v.mean(axis=0, keepdims=True)
    var_q = np.mean(np.sum(centered * centered, axis=-1), axis=0)
    return float(np.dot(quad.weights, var_q))
