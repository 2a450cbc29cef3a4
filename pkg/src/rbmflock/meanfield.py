"""Monte Carlo realisation of the RBM mean-field operator and a large-N kinetic reference.

One application of ``qinf_step`` maps a sample pool of the law f(t_k) to a
sample pool of the law after one RBM interval in the N -> infinity limit:
every member is paired with p-1 companions drawn from the frozen pool, the
p-particle system runs for tau, and only the member's own state is kept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PoolTooSmallError
from .integrators import StepperSpec
from .kernels import KernelSpec
from .metrics import subsampled_wasserstein, wasserstein_assignment
from .particles import Ensemble, SimulationSettings, evolve_batches, simulate, steps_for


@dataclass
class SamplePool:
    states: np.ndarray  # (M, 2d): positions then velocities
    time: float = 0.0

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[1] % 2:
            raise ConfigurationError("pool states must be an (M, 2d) array")
        if not np.all(np.isfinite(self.states)):
            raise ConfigurationError("pool contains non-finite entries")

    @property
    def m(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1] // 2

    @property
    def positions(self):
        return self.states[:, : self.dim]

    @property
    def velocities(self):
        return self.states[:, self.dim :]

    @classmethod
    def from_ensemble(cls, ens: Ensemble) -> "SamplePool":
        return cls(np.hstack([ens.positions, ens.velocities]), ens.time)

    def to_ensemble(self) -> Ensemble:
        return Ensemble(self.positions.copy(), self.velocities.copy(), self.time)

    def velocity_second_moment(self) -> float:
        v = self.velocities
        return float(np.mean(np.sum(v * v, axis=1)))

    def mean_velocity(self) -> np.ndarray:
        return self.velocities.mean(axis=0)


def companion_rng(seed, step_index, stream=()):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream), int(step_index), 0x51]))


def qinf_step(
    pool: SamplePool,
    p: int,
    spec: KernelSpec,
    stepper: StepperSpec,
    tau: float,
    seed: int,
    step_index: int = 0,
    stream=(),
    whole_pool: bool = False,
) -> SamplePool:
    """Advance the pool by one RBM mean-field interval.

    Companions are drawn with replacement from the pool as it stands at t_k.
    ``whole_pool=True`` is a diagnostic mode: the entire pool forms one batch
    (p is then ignored), i.e. one step of the full system on the pool.
    """
    if whole_pool:
        if pool.m < 2:
            raise PoolTooSmallError("whole-pool mode needs at least two members")
        state = np.stack([pool.positions, pool.velocities])[:, None]
        out = evolve_batches(state, spec, pool.m, stepper, tau, step_index=step_index)[:, 0]
        return SamplePool(np.hstack([out[0], out[1]]), pool.time + tau)
    if p < 2:
        raise ConfigurationError("batch size p must be >= 2")
    if pool.m < p:
        raise PoolTooSmallError(f"pool of size {pool.m} is smaller than p={p}")
    rng = companion_rng(seed, step_index, stream)
    comp = rng.integers(0, pool.m, size=(pool.m, p - 1))
    members = np.concatenate([np.arange(pool.m)[:, None], comp], axis=1)  # (M, p)
    block = np.stack([pool.positions[members], pool.velocities[members]])  # (2, M, p, d)
    out = evolve_batches(block, spec, p, stepper, tau, step_index=step_index)
    return SamplePool(np.hstack([out[0, :, 0], out[1, :, 0]]), pool.time + tau)


def iterate_qinf(pool, n_steps, p, spec, stepper, tau, seed, stream=(), callback=None):
    for k in range(n_steps):
        pool = qinf_step(pool, p, spec, stepper, tau, seed, k, stream)
        if callback is not None:
            callback(k, pool)
    return pool


@dataclass
class ReferenceSettings:
    n_ref: int = 8192
    dt: float = 0.05
    T: float = 1.0
    snapshot_times: tuple = (1.0,)


def meanfield_reference(initial: Ensemble, spec: KernelSpec, settings: ReferenceSettings):
    """Full N_ref-particle Cucker-Smale run used as a surrogate for the kinetic solution.

    Returns ``(snapshots, trajectory)`` with snapshots keyed by time as SamplePools.
    """
    if initial.n != settings.n_ref:
        raise ConfigurationError(f"initial ensemble has {initial.n} particles, expected {settings.n_ref}")
    sim = SimulationSettings(
        mode="full",
        tau=settings.dt,
        T=settings.T,
        stepper=StepperSpec("rk4", settings.dt, 1),
        snapshot_times=tuple(settings.snapshot_times),
    )
    traj = simulate(initial, spec, sim)
    snaps = {t: SamplePool.from_ensemble(e) for t, e in traj.snapshots.items()}
    return snaps, traj


@dataclass
class TauScanSettings:
    taus: tuple = (0.2, 0.1, 0.05, 0.025)
    T: float = 1.0
    m: int = 4096
    p: int = 2
    n_replicates: int = 4
    reference: ReferenceSettings = field(default_factory=ReferenceSettings)
    # exact assignment up to this many points; larger pools are subsampled
    w2_cap: int = 4096
    w2_reps: int = 8
    substeps: int = 1
    seed: int = 0


@dataclass
class TauScanRow:
    tau: float
    w2_gap: float
    w2_stderr: float
    n_replicates: int


@dataclass
class TauScanResult:
    rows: list
    slope: float
    fit_taus: tuple
    floor: float  # W2 between two disjoint halves of the reference (independent samples)

    def gaps(self):
        return np.array([r.w2_gap for r in self.rows])


def fit_loglog_slope(x, y) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if x.size < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def _w2(a, b, settings, seed):
    if a.shape[0] <= settings.w2_cap:
        return wasserstein_assignment(a, b, 2.0, cap=settings.w2_cap)
    return subsampled_wasserstein(a, b, 2.0, settings.w2_cap, settings.w2_reps, seed=seed, paired=True)[0]


def theorem2_scan(initial: Ensemble, spec: KernelSpec, settings: TauScanSettings, reference=None) -> TauScanResult:
    """W2 gap between iterated Q_inf pools and the large-N reference at time T, per tau.

    The pool at t=0 is the first M particles of the reference's initial sample
    (common random numbers), and the gap is measured against those same M
    reference particles at T with index-paired subsampling.
    """
    ref_settings = settings.reference
    if reference is None:
        snaps, _ = meanfield_reference(initial, spec, ReferenceSettings(ref_settings.n_ref, ref_settings.dt, settings.T, (settings.T,)))
        reference = snaps[settings.T]
    m = settings.m
    if m > reference.m:
        raise ConfigurationError("pool larger than the reference")
    ref_states = reference.states[:m]
    pool0 = SamplePool(np.hstack([initial.positions[:m], initial.velocities[:m]]))
    rows = []
    for si, tau in enumerate(settings.taus):
        n_steps = steps_for(settings.T, tau)
        stepper = StepperSpec("rk4", tau / settings.substeps, settings.substeps)
        gaps = []
        for r in range(settings.n_replicates):
            pool = iterate_qinf(pool0, n_steps, settings.p, spec, stepper, tau, settings.seed, stream=(si, r))
            gaps.append(_w2(pool.states, ref_states, settings, settings.seed + r))
        gaps = np.array(gaps)
        se = float(gaps.std(ddof=1) / math.sqrt(gaps.size)) if gaps.size > 1 else float("nan")
        rows.append(TauScanRow(tau, float(gaps.mean()), se, gaps.size))
    half = min(reference.m // 2, m)
    floor = _w2(reference.states[:half], reference.states[half : 2 * half], settings, settings.seed)
    usable = [r for r in rows if not (r.w2_stderr > 0) or r.w2_gap > 3 * r.w2_stderr]
    slope = fit_loglog_slope([r.tau for r in usable], [r.w2_gap for r in usable]) if len(usable) >= 2 else float("nan")
    return TauScanResult(rows, slope, tuple(r.tau for r in usable), floor)
