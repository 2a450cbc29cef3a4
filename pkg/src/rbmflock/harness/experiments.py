"""Experiment drivers. Each returns an ``ExperimentBundle`` of named tables plus a summary.

Replicates of the gPC experiments are stacked along a leading axis and run in
groups whose size depends only on the problem size, so results do not depend
on how many worker processes execute the groups.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..cleanliness import estimate_epsilon
from ..errors import ConfigurationError
from ..gpc import (
    GpcEnsemble,
    GpcStepper,
    Histogram,
    PhaseGrid,
    RandomParamSpec,
    build_basis,
    quadrature,
    reconstruct_expected_density,
)
from ..integrators import StepperSpec
from ..kernels import KernelSpec
from ..kinetic import VelocityGrid, affine, assemble_H, bimodal_density, expected_temperature, fgpc_solve
from ..meanfield import ReferenceSettings, SamplePool, TauScanSettings, iterate_qinf, theorem2_scan
from ..metrics import mse_with_stderr, tv_error
from ..particles import SimulationSettings, diameter, sample_batch_plan, simulate, steps_for
from .config import ScenarioConfig
from .initial import InitialDistribution, sample_initial

# memory budget (in doubles) for the per-group pair-coefficient array
_GROUP_BUDGET = 1 << 22
_MAX_GROUP = 25


@dataclass
class ExperimentBundle:
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    summary: dict = field(default_factory=dict)

    def add(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])


@contextmanager
def _executor(workers):
    if workers <= 1:
        yield None
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            yield ex


def _map(executor, fn, jobs):
    if executor is None:
        return [fn(j) for j in jobs]
    return list(executor.map(fn, jobs))


def interval_lengths(T, dt):
    """Step lengths covering [0, T]: full steps of dt, then a shorter final step if T is not a multiple."""
    if dt <= 0 or T < 0:
        raise ConfigurationError("need dt > 0 and T >= 0")
    n = int(math.floor(T / dt + 1e-9))
    lengths = [dt] * n
    rem = T - n * dt
    if rem > 1e-9 * max(1.0, T):
        lengths.append(rem)
    return lengths


def group_size(n, p, n_modes):
    return int(min(_MAX_GROUP, max(1, _GROUP_BUDGET // (n * p * n_modes * n_modes))))


# ---------------------------------------------------------------------------
# stacked RBM-gPC


def run_gpc_stack(xhat, vhat, gstep: GpcStepper, p, lengths, seed, streams, on_step=None):
    """RBM-gPC on R stacked ensembles ``(R, N, L, d)``; replicate r draws batches from ``streams[r]``."""
    R, n = xhat.shape[:2]
    if len(streams) != R:
        raise ConfigurationError("one batch stream per replicate required")
    state = np.stack([xhat, vhat])
    ridx = np.arange(R)[:, None, None]
    for k, h in enumerate(lengths):
        batches = np.stack([sample_batch_plan(n, p, k, seed, s).batches for s in streams])
        block = gstep.evolve(state[:, ridx, batches], p, h, k)
        state[:, ridx, batches] = block
        if on_step is not None:
            on_step(k + 1, state)
    return state


def _modes_at_nodes(hat, phi):
    """Values at the quadrature nodes, (R, N, Q, d) from (R, N, L, d)."""
    out = np.zeros(hat.shape[:2] + (phi.shape[0], hat.shape[-1]))
    for k in range(phi.shape[1]):
        out += phi[:, k][:, None] * hat[:, :, k, None, :]
    return out


def stacked_temperature(vhat, phi, weights):
    """Expected temperature of each stacked ensemble, shape (R,)."""
    v = _modes_at_nodes(vhat, phi)
    centered = v - v.mean(axis=1, keepdims=True)
    var_q = np.mean(np.sum(centered * centered, axis=-1), axis=1)  # (R, Q)
    return var_q @ weights


@dataclass(frozen=True)
class GroupJob:
    kernel: dict
    param: tuple
    K: int
    q_order: int
    initial: dict
    n: int
    p: int
    dim: int
    lengths: tuple
    seed: int
    replicates: tuple
    stream_tag: tuple  # (scan_index, role) appended to the replicate index
    v_grid: tuple | None = None  # (low, high, cells) for the expected velocity density
    record_every_step: bool = False


def _group_setup(job: GroupJob):
    spec = KernelSpec.from_dict(job.kernel)
    basis = build_basis(RandomParamSpec("uniform", *job.param), job.K)
    quad = quadrature(basis.param, job.q_order)
    return spec, basis, quad


def _initial_stack(job: GroupJob, n_modes):
    dist = InitialDistribution.from_dict(job.initial)
    R = len(job.replicates)
    xhat = np.zeros((R, job.n, n_modes, job.dim))
    vhat = np.zeros((R, job.n, n_modes, job.dim))
    for i, r in enumerate(job.replicates):
        ens = sample_initial(dist, job.n, job.dim, job.seed, stream=(r, job.n))
        xhat[i, :, 0] = ens.positions
        vhat[i, :, 0] = ens.velocities
    return xhat, vhat


def run_group(job: GroupJob):
    """Run one group of homogeneous-type replicates; returns temperatures and optional densities."""
    spec, basis, quad = _group_setup(job)
    phi = basis(quad.nodes)
    xhat, vhat = _initial_stack(job, basis.n_modes)
    gstep = GpcStepper(spec, basis, quad, StepperSpec("rk4", job.lengths[0] if job.lengths else 1.0, 1))
    streams = [(job.stream_tag[0], r, job.stream_tag[1]) for r in job.replicates]
    traj = [stacked_temperature(vhat, phi, quad.weights)]

    def on_step(k, state):
        if job.record_every_step:
            traj.append(stacked_temperature(state[1], phi, quad.weights))

    state = run_gpc_stack(xhat, vhat, gstep, job.p, job.lengths, job.seed, streams, on_step)
    out = {"replicates": job.replicates, "final": stacked_temperature(state[1], phi, quad.weights)}
    if job.record_every_step:
        out["trajectory"] = np.stack(traj, axis=1)  # (R, n_steps + 1)
    if job.v_grid is not None:
        grid = PhaseGrid((job.v_grid[0],), (job.v_grid[1],), (job.v_grid[2],))
        dens = np.zeros(job.v_grid[2])
        for i in range(len(job.replicates)):
            ens = GpcEnsemble(state[0, i], state[1, i])
            dens += reconstruct_expected_density(ens, grid, basis, quad, axes="v").density
        out["density_sum"] = dens
    return out


def _run_replicates(cfg: ScenarioConfig, n, p, dt, stream_tag, executor, v_grid=None, record_every_step=False):
    lengths = tuple(interval_lengths(cfg.T, dt))
    gsize = group_size(n, p, cfg.K + 1)
    reps = list(range(cfg.n_replicates))
    jobs = [
        GroupJob(
            kernel=cfg.kernel.to_dict(),
            param=(cfg.param.a, cfg.param.b),
            K=cfg.K,
            q_order=cfg.quadrature_order,
            initial=cfg.initial.to_dict(),
            n=n,
            p=p,
            dim=cfg.dim,
            lengths=lengths,
            seed=cfg.seed,
            replicates=tuple(reps[i : i + gsize]),
            stream_tag=stream_tag,
            v_grid=v_grid,
            record_every_step=record_every_step,
        )
        for i in range(0, len(reps), gsize)
    ]
    results = _map(executor, run_group, jobs)
    merged = {"final": np.concatenate([r["final"] for r in results])}
    if record_every_step:
        merged["trajectory"] = np.concatenate([r["trajectory"] for r in results])
    if v_grid is not None:
        merged["density"] = sum(r["density_sum"] for r in results) / cfg.n_replicates
    return merged


# ---------------------------------------------------------------------------
# homogeneous experiment and its kinetic reference


def _require_seed(cfg):
    if cfg.seed is None:
        raise ConfigurationError("a seed is required for experiment runs")


def _homogeneous_kernel(cfg):
    if cfg.kernel.family != "constant":
        raise ConfigurationError("the homogeneous experiment needs a constant-family kernel")
    return affine(cfg.kernel.kappa * cfg.kernel.level, cfg.kernel.kappa * cfg.kernel.level_slope)


def kinetic_reference(cfg: ScenarioConfig, dt=None):
    """fgPC reference densities on the configured velocity grid."""
    vg = VelocityGrid(cfg.grid["low"], cfg.grid["high"], cfg.grid["dv"])
    basis = build_basis(cfg.param, cfg.K)
    quad = quadrature(cfg.param, cfg.quadrature_order)
    H = assemble_H(_homogeneous_kernel(cfg), basis, quad)
    dist = cfg.initial.params
    f0 = bimodal_density(vg, dist["mu"], dist["sigma2"])
    return fgpc_solve(vg, H, f0, dt or cfg.tau, cfg.T)


def _velocity_grid_tuple(cfg):
    vg = VelocityGrid(cfg.grid["low"], cfg.grid["high"], cfg.grid["dv"])
    return (vg.v_min, vg.v_max, vg.n_cells), vg


def reference_histogram(density, v_grid):
    grid = PhaseGrid((v_grid[0],), (v_grid[1],), (v_grid[2],))
    return Histogram(grid, density.coeffs[0].copy())


def run_homogeneous(cfg: ScenarioConfig) -> ExperimentBundle:
    """RBM-gPC replicates against the fgPC reference: temperatures, MSE_T, Err_TV and densities."""
    _require_seed(cfg)
    if cfg.initial.family != "bimodal1d_v" or cfg.dim != 1:
        raise ConfigurationError("the homogeneous experiment uses bimodal1d_v data in one dimension")
    v_grid, vg = _velocity_grid_tuple(cfg)
    ref = kinetic_reference(cfg)
    ref_temps = np.array([expected_temperature(d) for d in ref])
    with _executor(cfg.workers) as ex:
        res = _run_replicates(cfg, cfg.N, cfg.p, cfg.tau, (0, 0), ex, v_grid=v_grid, record_every_step=True)
    traj = res["trajectory"]
    times = np.array([d.time for d in ref])
    if traj.shape[1] != times.size:
        raise ConfigurationError("reference and particle runs use different time grids")
    b = ExperimentBundle()
    b.add(
        "temperature",
        ["replicate", "t", "temperature", "reference"],
        [[r, times[k], traj[r, k], ref_temps[k]] for r in range(traj.shape[0]) for k in range(times.size)],
    )
    mse, se = mse_with_stderr(traj[:, -1], np.full(traj.shape[0], ref_temps[-1]))
    err_tv = tv_error(Histogram(PhaseGrid((v_grid[0],), (v_grid[1],), (v_grid[2],)), res["density"]), reference_histogram(ref[-1], v_grid))
    b.add("density_final", ["v", "rbm_gpc", "reference"], np.column_stack([vg.centers, res["density"], ref[-1].coeffs[0]]))
    b.summary = {
        "reference_temperature": float(ref_temps[-1]),
        "mean_temperature": float(traj[:, -1].mean()),
        "mse_T": mse,
        "mse_T_stderr": se,
        "err_tv": err_tv,
        "n_replicates": int(traj.shape[0]),
    }
    b.add("summary", list(b.summary), [list(b.summary.values())])
    return b


# ---------------------------------------------------------------------------
# inhomogeneous Cucker-Smale with random kernel


def run_cs(cfg: ScenarioConfig) -> ExperimentBundle:
    """Single RBM-gPC run with diagnostics every step and expected-density histograms at snapshots."""
    _require_seed(cfg)
    if cfg.scenario not in ("cs1d", "cs2d"):
        raise ConfigurationError("run_cs needs scenario cs1d or cs2d")
    basis = build_basis(cfg.param, cfg.K)
    quad = quadrature(cfg.param, cfg.quadrature_order)
    ens0 = sample_initial(cfg.initial, cfg.N, cfg.dim, cfg.seed, stream=(0, cfg.N))
    g = GpcEnsemble.from_samples(ens0.positions, ens0.velocities, cfg.K)
    gstep = GpcStepper(cfg.kernel, basis, quad, StepperSpec("rk4", cfg.tau, 1))
    n_steps = steps_for(cfg.T, cfg.tau)
    snap_steps = {steps_for(t, cfg.tau): t for t in cfg.snapshot_times}
    lo, hi, cells = cfg.grid["low"], cfg.grid["high"], int(cfg.grid["cells"])
    L, d = basis.n_modes, cfg.dim
    diag_rows, hist_tables = [], {}

    def record(k, state):
        xh, vh = state[0, 0], state[1, 0]
        mom = vh.sum(axis=0)  # (L, d)
        dx, _ = diameter(xh[:, 0])
        dv, _ = diameter(vh[:, 0])
        diag_rows.append([k * cfg.tau, dx, dv, *mom.ravel()])
        if k in snap_steps:
            e = GpcEnsemble(xh, vh)
            if d == 1:
                grids = {"xv": PhaseGrid.uniform(lo, hi, cells, 2)}
            else:
                grids = {"x": PhaseGrid.uniform(lo, hi, cells, d), "v": PhaseGrid.uniform(lo, hi, cells, d)}
            for axes, grid in grids.items():
                h = reconstruct_expected_density(e, grid, basis, quad, axes=axes)
                names = [f"{a}{c}" for a in axes for c in range(d)]
                centers = np.meshgrid(*grid.centers(), indexing="ij")
                rows = np.column_stack([c.ravel() for c in centers] + [h.density.ravel()])
                hist_tables[f"density_{axes}_t{snap_steps[k]:g}"] = (names + ["density"], rows, h.outside_mass)

    state0 = np.stack([g.xhat, g.vhat])[:, None]
    record(0, state0)
    run_gpc_stack(state0[0], state0[1], gstep, cfg.p, [cfg.tau] * n_steps, cfg.seed, [(0, 0, 0)], record)
    b = ExperimentBundle()
    mom_names = [f"momentum_m{l}_d{c}" for l in range(L) for c in range(d)]
    b.add("diagnostics", ["t", "diam_x", "diam_v", *mom_names], diag_rows)
    outside = {}
    for name, (header, rows, out_mass) in hist_tables.items():
        b.add(name, header, rows)
        outside[name] = out_mass
    diag = np.array(diag_rows)
    mom = diag[:, 3:]
    b.summary = {
        "max_mode_momentum_drift": float(np.max(np.abs(mom - mom[0]))),
        "diam_v_initial": float(diag[0, 2]),
        "diam_v_final": float(diag[-1, 2]),
        "outside_mass": outside,
    }
    return b


# ---------------------------------------------------------------------------
# scans


def _scan_rows_mse(values, results, ref_key_fn, extra=None):
    rows = []
    for i, (val, res) in enumerate(zip(values, results)):
        ref = ref_key_fn(i, res)
        mse, se = mse_with_stderr(res["final"], ref)
        row = [val, mse, se, res["final"].size]
        if extra is not None:
            row += extra(i, res)
        rows.append(row)
    return rows


def run_n_scan(cfg, executor=None):
    v_grid, _ = _velocity_grid_tuple(cfg)
    ref = kinetic_reference(cfg)
    ref_T = expected_temperature(ref[-1])
    ref_hist = reference_histogram(ref[-1], v_grid)
    grid = ref_hist.grid
    results = [_run_replicates(cfg, n, cfg.p, cfg.tau, (i, 0), executor, v_grid=v_grid) for i, n in enumerate(cfg.n_values)]

    def tv(i, res):
        return [tv_error(Histogram(grid, res["density"]), ref_hist)]

    rows = _scan_rows_mse(cfg.n_values, results, lambda i, r: np.full(r["final"].size, ref_T), tv)
    return ["N", "mse_T", "mse_T_stderr", "n_replicates", "err_tv"], rows, {"reference_temperature": ref_T}


def run_p_scan(cfg, executor=None):
    # reference: the same initial data with the whole ensemble in one batch
    ref = _run_replicates(cfg, cfg.N, cfg.N, cfg.reference_dt, (0, 1), executor)["final"]
    results = [_run_replicates(cfg, cfg.N, p, cfg.tau, (i, 0), executor) for i, p in enumerate(cfg.p_values)]
    rows = _scan_rows_mse(cfg.p_values, results, lambda i, r: ref)
    return ["p", "mse_T", "mse_T_stderr", "n_replicates"], rows, {}


def run_dt_scan(cfg, executor=None):
    # reference: same initial data and p, dt = reference_dt, independent batch stream
    ref = _run_replicates(cfg, cfg.N, cfg.p, cfg.reference_dt, (0, 1), executor)["final"]
    results = [_run_replicates(cfg, cfg.N, cfg.p, dt, (i, 0), executor) for i, dt in enumerate(cfg.dt_values)]
    rows = _scan_rows_mse(cfg.dt_values, results, lambda i, r: ref)
    return ["dt", "mse_T", "mse_T_stderr", "n_replicates"], rows, {}


def run_epsilon_scan(cfg, executor=None):
    rows, violations = [], 0
    for n in cfg.n_values:
        for k in range(cfg.k_steps + 1):
            est = estimate_epsilon(n, cfg.p, k, cfg.trials, cfg.seed, executor=executor)
            violations += est.violations
            rows.append([n, cfg.p, k, est.trials, est.epsilon_hat, est.stderr, est.violations])
    header = ["N", "p", "k", "trials", "epsilon_hat", "stderr", "violations"]
    final = [r for r in rows if r[2] == cfg.k_steps]
    slope = float(np.polyfit(np.log([r[0] for r in final]), np.log([max(r[4], 1e-300) for r in final]), 1)[0]) if len(final) > 1 else float("nan")
    return header, rows, {"loglog_slope": slope, "violations": violations}


def run_tau_scan(cfg, executor=None):
    ens = sample_initial(cfg.initial, cfg.n_ref, cfg.dim, cfg.seed, stream=(0, cfg.n_ref))
    settings = TauScanSettings(
        taus=cfg.taus,
        T=cfg.T,
        m=cfg.pool_size,
        p=cfg.p,
        n_replicates=cfg.n_replicates,
        reference=ReferenceSettings(cfg.n_ref, cfg.reference_dt, cfg.T, (cfg.T,)),
        w2_cap=cfg.w2_cap,
        seed=cfg.seed,
    )
    res = theorem2_scan(ens, cfg.kernel, settings)
    rows = [[r.tau, r.w2_gap, r.w2_stderr, r.n_replicates] for r in res.rows]
    return ["tau", "w2_gap", "w2_stderr", "n_replicates"], rows, {"slope": res.slope, "fit_taus": list(res.fit_taus), "sampling_floor": res.floor}


SCANS = {
    "n_scan": run_n_scan,
    "p_scan": run_p_scan,
    "dt_scan": run_dt_scan,
    "epsilon_scan": run_epsilon_scan,
    "tau_scan": run_tau_scan,
}


def run_scans(cfg: ScenarioConfig) -> ExperimentBundle:
    """Run the scan named by ``cfg.scenario``; the table carries replicate counts and standard errors."""
    _require_seed(cfg)
    if cfg.scenario not in SCANS:
        raise ConfigurationError(f"{cfg.scenario!r} is not a scan scenario; expected one of {sorted(SCANS)}")
    with _executor(cfg.workers) as ex:
        header, rows, summary = SCANS[cfg.scenario](cfg, ex)
    b = ExperimentBundle(summary=summary)
    b.add(cfg.scenario, header, rows)
    return b


# ---------------------------------------------------------------------------
# plain particle runs and mean-field pools


def run_meanfield(cfg: ScenarioConfig) -> ExperimentBundle:
    """Iterate the mean-field RBM operator on a pool of N samples; per-step moments and the final pool."""
    _require_seed(cfg)
    ens = sample_initial(cfg.initial, cfg.N, cfg.dim, cfg.seed, stream=(0, cfg.N))
    pool = SamplePool.from_ensemble(ens)
    n_steps = steps_for(cfg.T, cfg.tau)
    rows = [[0.0, pool.velocity_second_moment(), *pool.mean_velocity()]]

    def cb(k, pl):
        rows.append([pl.time, pl.velocity_second_moment(), *pl.mean_velocity()])

    pool = iterate_qinf(pool, n_steps, cfg.p, cfg.kernel, StepperSpec("rk4", cfg.tau, 1), cfg.tau, cfg.seed, callback=cb)
    b = ExperimentBundle()
    b.add("pool_moments", ["t", "second_moment", *[f"mean_v{c}" for c in range(cfg.dim)]], rows)
    b.add("pool_final", [f"x{c}" for c in range(cfg.dim)] + [f"v{c}" for c in range(cfg.dim)], pool.states)
    return b


def run_particles(cfg: ScenarioConfig, mode: str) -> ExperimentBundle:
    """Full or RBM Cucker-Smale run at a fixed theta; diagnostics every step and snapshots."""
    _require_seed(cfg)
    theta = cfg.theta
    if theta is None and cfg.kernel.is_stochastic:
        theta = 0.5 * (cfg.param.a + cfg.param.b)
    ens = sample_initial(cfg.initial, cfg.N, cfg.dim, cfg.seed, stream=(0, cfg.N))
    settings = SimulationSettings(
        mode=mode,
        p=cfg.p,
        tau=cfg.tau,
        T=cfg.T,
        stepper=StepperSpec("rk4", cfg.tau, 1),
        snapshot_times=cfg.snapshot_times,
        seed=cfg.seed,
        theta=theta,
    )
    traj = simulate(ens, cfg.kernel, settings)
    d = cfg.dim
    b = ExperimentBundle()
    b.add(
        "diagnostics",
        ["t", "kinetic_energy", "diam_x", "diam_v", *[f"momentum_d{c}" for c in range(d)]],
        [[t, g.kinetic_energy, g.diam_x, g.diam_v, *g.momentum] for t, g in zip(traj.times, traj.diagnostics)],
    )
    names = [f"x{c}" for c in range(d)] + [f"v{c}" for c in range(d)]
    for t, e in traj.snapshots.items():
        b.add(f"snapshot_t{t:g}", names, np.hstack([e.positions, e.velocities]))
    return b
