"""Cucker-Smale N-particle system and its Random Batch approximation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigurationError, DegenerateSystemError
from .integrators import StepperSpec
from .kernels import KernelSpec

DIAMETER_EXACT_LIMIT = 4096


@dataclass
class Ensemble:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape != self.velocities.shape:
            raise ConfigurationError("positions and velocities must both be N x d arrays")
        if self.positions.shape[0] < 1 or self.positions.shape[1] < 1:
            raise ConfigurationError("ensemble needs n >= 1 and dim >= 1")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ConfigurationError("ensemble contains non-finite entries")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def state(self) -> np.ndarray:
        """Stacked (2, N, d) array of positions and velocities."""
        return np.stack([self.positions, self.velocities])

    @classmethod
    def from_state(cls, state, time):
        return cls(state[0], state[1], time)

    def copy(self) -> "Ensemble":
        return Ensemble(self.positions.copy(), self.velocities.copy(), self.time)


@dataclass
class BatchPlan:
    n: int
    p: int
    assignment: np.ndarray  # batch index of each particle
    step_index: int
    batches: np.ndarray = field(repr=False)  # (n // p, p), rows sorted

    @property
    def n_batches(self) -> int:
        return self.n // self.p


def check_batching(n: int, p: int) -> None:
    if p < 2:
        raise ConfigurationError(f"batch size p={p} must be >= 2")
    if n % p:
        raise ConfigurationError(f"batch size p={p} does not divide N={n}")


def partition_from_permutation(perm, p):
    """Chunk a permutation into consecutive p-blocks, each sorted ascending.

    Sorting makes a batch an unordered set; with p = N the single batch is the
    identity ordering, which is what lets the p = N run reproduce the full
    system exactly.
    """
    perm = np.asarray(perm)
    return np.sort(perm.reshape(-1, p), axis=-1)


def batch_rng(seed, step_index, stream=()):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream), int(step_index)]))


def sample_batch_plan(n: int, p: int, step_index: int, seed: int, stream=()) -> BatchPlan:
    """Uniform random partition of range(n) into n/p batches of size p.

    Deterministic in (seed, stream, step_index).
    """
    check_batching(n, p)
    perm = batch_rng(seed, step_index, stream).permutation(n)
    batches = partition_from_permutation(perm, p)
    assignment = np.empty(n, dtype=np.int64)
    assignment[batches] = np.arange(n // p)[:, None]
    return BatchPlan(n=n, p=p, assignment=assignment, step_index=step_index, batches=batches)


def _velocity_rhs(X, V, args, coef):
    family, level, gamma, kr, kp = args
    X = np.ascontiguousarray(X, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    return _backend.velocity_rhs(X, V, family, level, gamma, kr, kp, coef)


def cs_rhs(ens: Ensemble, spec: KernelSpec, theta=None):
    """(dX, dV) of the full N-particle Cucker-Smale system."""
    if ens.n < 2:
        raise DegenerateSystemError("Cucker-Smale dynamics needs at least two particles")
    coef = spec.kappa / (ens.n - 1)
    dv = _velocity_rhs(ens.positions[None], ens.velocities[None], spec.kernel_args(theta), coef)[0]
    return ens.velocities.copy(), dv


def _full_rhs(args, coef):
    def rhs(state):
        dv = _velocity_rhs(state[0][None], state[1][None], args, coef)[0]
        return np.stack([state[1], dv])

    return rhs


def _batched_rhs(args, coef):
    def rhs(state):
        return np.stack([state[1], _velocity_rhs(state[0], state[1], args, coef)])

    return rhs


def full_step(ens: Ensemble, spec: KernelSpec, stepper: StepperSpec, tau: float, theta=None, step_index=None) -> Ensemble:
    """Advance the full system by tau."""
    if ens.n < 2:
        raise DegenerateSystemError("Cucker-Smale dynamics needs at least two particles")
    rhs = _full_rhs(spec.kernel_args(theta), spec.kappa / (ens.n - 1))
    new = stepper.advance(rhs, ens.state(), tau, step_index)
    return Ensemble.from_state(new, ens.time + tau)


def evolve_batches(state, spec: KernelSpec, p: int, stepper: StepperSpec, tau: float, theta=None, step_index=None):
    """Evolve a (2, n_batches, p, d) block of independent p-particle systems."""
    rhs = _batched_rhs(spec.kernel_args(theta), spec.kappa / (p - 1))
    return stepper.advance(rhs, state, tau, step_index)


def rbm_step(ens: Ensemble, plan: BatchPlan, spec: KernelSpec, stepper: StepperSpec, tau: float, theta=None) -> Ensemble:
    """One Random Batch interval: each batch runs its own p-particle dynamics."""
    if plan.n != ens.n:
        raise ConfigurationError(f"plan is for N={plan.n}, ensemble has N={ens.n}")
    idx = plan.batches
    state = ens.state()
    block = evolve_batches(state[:, idx], spec, plan.p, stepper, tau, theta, plan.step_index)
    out = np.empty_like(state)
    out[:, idx] = block
    return Ensemble.from_state(out, ens.time + tau)


@dataclass
class Diagnostics:
    momentum: np.ndarray
    kinetic_energy: float
    diam_x: float
    diam_v: float
    approximate: bool = False


def diameter(points, exact_limit=DIAMETER_EXACT_LIMIT, seed=0):
    """max_{i,j} |P_i - P_j|; returns (value, approximate_flag)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.shape[0] <= exact_limit:
        return _backend.max_pairwise_distance(points), False
    rng = np.random.default_rng(seed)
    sub = np.ascontiguousarray(points[rng.choice(points.shape[0], exact_limit, replace=False)])
    return _backend.max_pairwise_distance(sub), True


def diagnostics(ens: Ensemble, exact_limit=DIAMETER_EXACT_LIMIT) -> Diagnostics:
    dx, ax = diameter(ens.positions, exact_limit)
    dv, av = diameter(ens.velocities, exact_limit)
    return Diagnostics(
        momentum=ens.velocities.sum(axis=0),
        kinetic_energy=float(np.sum(ens.velocities * ens.velocities)),
        diam_x=dx,
        diam_v=dv,
        approximate=ax or av,
    )


@dataclass
class SimulationSettings:
    mode: str = "rbm"  # "full" or "rbm"
    p: int = 2
    tau: float = 1e-2
    T: float = 1.0
    stepper: StepperSpec = field(default_factory=StepperSpec)
    snapshot_times: tuple = ()
    seed: int = 0
    stream: tuple = ()
    theta: float | None = None

    def n_steps(self) -> int:
        return steps_for(self.T, self.tau)


def steps_for(T, tau):
    if T < 0 or tau <= 0:
        raise ConfigurationError("need T >= 0 and tau > 0")
    k = int(round(T / tau))
    if abs(k * tau - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError(f"T={T} is not a multiple of tau={tau}")
    return k


@dataclass
class Trajectory:
    times: list
    diagnostics: list
    snapshots: dict  # time -> Ensemble


def simulate(ens: Ensemble, spec: KernelSpec, settings: SimulationSettings, callback=None) -> Trajectory:
    """Run full or RBM dynamics from ens.time over [0, T] with a fixed tau.

    Diagnostics are recorded every step; snapshots at the requested times
    (rounded to the step grid). ``callback(k, before, after, plan)`` is invoked
    after every step, for invariant monitoring.
    """
    if settings.mode not in ("full", "rbm"):
        raise ConfigurationError(f"unknown mode {settings.mode!r}")
    n_steps = settings.n_steps()
    if settings.mode == "rbm":
        check_batching(ens.n, settings.p)
    elif ens.n < 2 and n_steps > 0:
        raise DegenerateSystemError("Cucker-Smale dynamics needs at least two particles")
    snap_steps = {steps_for(t, settings.tau): t for t in settings.snapshot_times}
    traj = Trajectory(times=[ens.time], diagnostics=[diagnostics(ens)], snapshots={})
    if 0 in snap_steps:
        traj.snapshots[snap_steps[0]] = ens.copy()
    for k in range(n_steps):
        if settings.mode == "full":
            plan = None
            new = full_step(ens, spec, settings.stepper, settings.tau, settings.theta, step_index=k)
        else:
            plan = sample_batch_plan(ens.n, settings.p, k, settings.seed, settings.stream)
            new = rbm_step(ens, plan, spec, settings.stepper, settings.tau, settings.theta)
        if callback is not None:
            callback(k, ens, new, plan)
        ens = new
        traj.times.append(ens.time)
        traj.diagnostics.append(diagnostics(ens))
        if k + 1 in snap_steps:
            traj.snapshots[snap_steps[k + 1]] = ens.copy()
    return traj
