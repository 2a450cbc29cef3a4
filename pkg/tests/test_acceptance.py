"""Acceptance suite: one or more tests per criterion, reported in the terminal summary."""
import itertools
import math
import time

import numpy as np
import pytest

from rbmflock.gpc import (
    GpcEnsemble,
    GpcStepper,
    RandomParamSpec,
    build_basis,
    default_quadrature,
    gram_matrix,
    pair_coeffs,
    rbm_gpc_step,
)
from rbmflock.harness.cli import main
from rbmflock.harness.config import load_config
from rbmflock.harness.experiments import kinetic_reference, run_cs, run_homogeneous, run_scans
from rbmflock.harness.initial import InitialDistribution, sample_initial
from rbmflock.integrators import StepperSpec
from rbmflock.kernels import KernelSpec
from rbmflock.kinetic import expected_temperature
from rbmflock.meanfield import SamplePool, iterate_qinf
from rbmflock.metrics import wasserstein_1d, wasserstein_assignment
from rbmflock.particles import Ensemble, diameter, full_step, rbm_step, sample_batch_plan

IP = KernelSpec("inverse-power", kappa=1.0, gamma_base=0.5, psi0=0.01)
SEED = 20240611
HOMOGENEOUS_T_ORACLE = 0.21122


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def annulus(n, seed):
    return sample_initial(InitialDistribution("annulus2d"), n, 2, seed=seed)


def gaussian(n, d, seed):
    rng = np.random.default_rng(seed)
    return Ensemble(rng.normal(size=(n, d)), rng.normal(size=(n, d)))


def energy(ens):
    return float(np.sum(ens.velocities**2))


# -- 1 --------------------------------------------------------------------------


@criterion(1, "momentum and energy invariants of full CS and RBM")
def test_conservation_invariants():
    start = time.perf_counter()
    n, tau, steps = 256, 1e-2, 500
    stepper = StepperSpec("rk4", tau)
    full = rbm = gaussian(n, 2, SEED)
    m0 = full.velocities.sum(axis=0)
    scale = np.abs(full.velocities).sum()
    worst_batch = worst_global = 0.0
    worst_rise = -np.inf
    for k in range(steps):
        plan = sample_batch_plan(n, 2, k, SEED)
        new_rbm = rbm_step(rbm, plan, IP, stepper, tau)
        before = rbm.velocities[plan.batches].sum(axis=1)
        after = new_rbm.velocities[plan.batches].sum(axis=1)
        worst_batch = max(worst_batch, float(np.abs(after - before).max()))
        new_full = full_step(full, IP, stepper, tau)
        worst_rise = max(worst_rise, energy(new_full) - energy(full), energy(new_rbm) - energy(rbm))
        full, rbm = new_full, new_rbm
        for e in (full, rbm):
            worst_global = max(worst_global, float(np.abs(e.velocities.sum(axis=0) - m0).max()) / scale)
    elapsed = time.perf_counter() - start
    print(f"global drift {worst_global:.2e}, batch drift {worst_batch:.2e}, energy rise {worst_rise:.2e}, {elapsed:.1f} s")
    assert worst_global <= 1e-10
    assert worst_batch <= 1e-12
    assert worst_rise <= 1e-10
    assert elapsed < 10


# -- 2 --------------------------------------------------------------------------


@criterion(2, "velocity and position diameter bounds over 20 seeds")
@pytest.mark.parametrize("mode", ["full", "rbm"])
def test_diameter_bounds(mode):
    tau, steps, n = 1e-2, 300, 64
    stepper = StepperSpec("rk4", tau)
    for seed in range(20):
        ens = gaussian(n, 2, seed)
        dx0, dv0 = diameter(ens.positions)[0], diameter(ens.velocities)[0]
        for k in range(steps):
            if mode == "full":
                ens = full_step(ens, IP, stepper, tau)
            else:
                ens = rbm_step(ens, sample_batch_plan(n, 2, k, seed), IP, stepper, tau)
            t = (k + 1) * tau
            assert diameter(ens.velocities)[0] <= dv0 + 1e-9
            assert diameter(ens.positions)[0] <= dx0 + dv0 * t + 1e-9


# -- 3 --------------------------------------------------------------------------


@criterion(3, "RBM with p = N reproduces full CS bit for bit")
@pytest.mark.parametrize("n, d", [(16, 1), (32, 2)])
def test_rbm_full_batch_identity(n, d):
    stepper = StepperSpec("rk4", 1e-2)
    full = rbm = gaussian(n, d, SEED + n)
    for k in range(100):
        full = full_step(full, IP, stepper, 1e-2)
        rbm = rbm_step(rbm, sample_batch_plan(n, n, k, SEED), IP, stepper, 1e-2)
        assert np.array_equal(full.positions, rbm.positions)
        assert np.array_equal(full.velocities, rbm.velocities)


# -- 4 and 5 --------------------------------------------------------------------


@pytest.fixture(scope="module")
def epsilon_run():
    cfg = load_config(scenario="epsilon_scan", seed=SEED)
    start = time.perf_counter()
    bundle = run_scans(cfg)
    elapsed = time.perf_counter() - start
    header, rows = bundle.tables["epsilon_scan"]
    table = {name: np.array([r[i] for r in rows]) for i, name in enumerate(header)}
    return cfg, table, bundle.summary, elapsed


@criterion(4, "epsilon_k decreases in N with log-log slope near -1")
def test_epsilon_scaling(epsilon_run):
    cfg, t, summary, elapsed = epsilon_run
    assert cfg.p == 2 and cfg.k_steps == 3 and cfg.trials == 100_000
    assert tuple(cfg.n_values) == (64, 128, 256, 512)
    assert np.all(t["trials"] == 100_000)
    for k in (0, 1):
        assert np.all(t["epsilon_hat"][t["k"] == k] == 0.0)
    eps3 = t["epsilon_hat"][t["k"] == 3]
    print(f"eps_3 = {eps3}, slope {summary['loglog_slope']:.3f}, {elapsed:.1f} s")
    assert np.all(np.diff(eps3) < 0)
    assert -1.3 <= summary["loglog_slope"] <= -0.7
    assert elapsed < 60


@criterion(5, "influence list bound with equality exactly for clean particles")
def test_influence_list_bound(epsilon_run):
    _, t, summary, _ = epsilon_run
    assert summary["violations"] == 0
    assert np.all(t["violations"] == 0)


# -- 6 --------------------------------------------------------------------------


@criterion(6, "mean-field RBM W2 gap shrinks linearly in tau")
@pytest.mark.slow
def test_tau_scan_slope():
    cfg = load_config(scenario="tau_scan", seed=SEED)
    assert (cfg.dim, cfg.p, cfg.pool_size, cfg.n_ref, cfg.T) == (1, 2, 4096, 8192, 1.0)
    assert tuple(cfg.taus) == (0.2, 0.1, 0.05, 0.025)
    start = time.perf_counter()
    bundle = run_scans(cfg)
    elapsed = time.perf_counter() - start
    _, rows = bundle.tables["tau_scan"]
    gaps = np.array([r[1] for r in rows])
    se = np.array([r[2] for r in rows])
    s = bundle.summary
    print(f"gaps {gaps}, stderr {se}, floor {s['sampling_floor']:.4f}, slope {s['slope']:.3f} on {s['fit_taus']}, {elapsed:.1f} s")
    assert np.all(np.diff(gaps) < 0)
    assert len(s["fit_taus"]) >= 2
    assert s["slope"] >= 0.5
    assert elapsed < 300


# -- 7 --------------------------------------------------------------------------


@criterion(7, "pool second moment stays under the dissipation envelope")
def test_second_moment_envelope():
    kappa, psi0, tau, p, steps, reps, m = 1.0, 1.0, 0.1, 2, 50, 30, 2048
    spec = KernelSpec("constant", kappa=kappa, level=psi0, psi0=psi0, psiM=psi0)
    stepper = StepperSpec("rk4", tau)
    moments = np.zeros((reps, steps + 1))
    for r in range(reps):
        s = np.random.default_rng(SEED + r).normal(size=(m, 2))
        s[:, 1] -= s[:, 1].mean()
        pool = SamplePool(s)
        moments[r, 0] = pool.velocity_second_moment()

        def record(k, pl, r=r):
            moments[r, k + 1] = pl.velocity_second_moment()

        iterate_qinf(pool, steps, p, spec, stepper, tau, seed=SEED, stream=(r,), callback=record)
    mean = moments.mean(axis=0)
    se = moments.std(axis=0, ddof=1) / math.sqrt(reps)
    rate = math.exp(-2 * kappa * psi0 * tau) + 8 * kappa**2 * psi0 * tau**2 / (p - 1)
    envelope = mean[0] * rate ** np.arange(steps + 1)
    assert np.all(mean <= envelope + 3 * se)


# -- 8 --------------------------------------------------------------------------


@criterion(8, "homogeneous expected temperature against the closed form")
@pytest.mark.slow
def test_homogeneous_oracle():
    cfg = load_config(scenario="homogeneous", seed=SEED, n_replicates=25)
    assert (cfg.N, cfg.p, cfg.tau, cfg.T, cfg.K) == (10_000, 2, 1e-2, 0.5, 3)
    start = time.perf_counter()
    bundle = run_homogeneous(cfg)
    elapsed = time.perf_counter() - start
    s = bundle.summary
    ref = expected_temperature(kinetic_reference(cfg)[-1])
    print(f"RBM-gPC {s['mean_temperature']:.5f}, kinetic {ref:.5f}, oracle {HOMOGENEOUS_T_ORACLE}, {elapsed:.1f} s")
    assert s["mean_temperature"] == pytest.approx(HOMOGENEOUS_T_ORACLE, rel=0.05)
    assert ref == pytest.approx(HOMOGENEOUS_T_ORACLE, rel=0.01)
    assert elapsed < 60


# -- 9 --------------------------------------------------------------------------


def _monotone_within(mse, se, k=2.0):
    return all(mse[i + 1] <= mse[i] + k * math.hypot(se[i], se[i + 1]) for i in range(len(mse) - 1))


_scan_seconds = []


@criterion(9, "MSE_T nonincreasing in N, p and 1/dt")
@pytest.mark.slow
@pytest.mark.parametrize(
    "scenario, values",
    [
        ("n_scan", {"n_values": (32, 64, 128, 256, 512)}),
        ("p_scan", {"p_values": (2, 4, 8, 16), "N": 256}),
        ("dt_scan", {"dt_values": (4e-2, 2e-2, 1e-2, 5e-3), "N": 256, "p": 2}),
    ],
)
def test_mse_monotone(scenario, values):
    cfg = load_config(scenario=scenario, seed=SEED)
    assert cfg.n_replicates == 100
    for key, val in values.items():
        assert tuple(np.atleast_1d(getattr(cfg, key))) == tuple(np.atleast_1d(val))
    start = time.perf_counter()
    _, rows = run_scans(cfg).tables[scenario]
    _scan_seconds.append(time.perf_counter() - start)
    mse = [r[1] for r in rows]
    se = [r[2] for r in rows]
    print(f"{scenario}: mse {np.array(mse)}, stderr {np.array(se)}, total scan time {sum(_scan_seconds):.1f} s")
    assert all(r[3] == 100 for r in rows)
    assert _monotone_within(mse, se)
    assert sum(_scan_seconds) < 600


# -- 10 -------------------------------------------------------------------------


@criterion(10, "gPC basis, coefficients, degeneration and mode momentum")
@pytest.mark.parametrize("param", [RandomParamSpec("uniform", -1, 1), RandomParamSpec("uniform", 0, 1)])
def test_gpc_basis_and_coefficients(param):
    rng = np.random.default_rng(SEED)
    for order in range(8):
        basis = build_basis(param, order)
        assert np.abs(gram_matrix(basis) - np.eye(order + 1)).max() <= 1e-12
        xi, xj = rng.normal(size=(2, order + 1, 2))
        e = pair_coeffs(xi, xj, KernelSpec("constant", level=0.37), basis, default_quadrature(basis))
        assert np.abs(e - 0.37 * np.eye(order + 1)).max() <= 1e-14


@criterion(10, "gPC basis, coefficients, degeneration and mode momentum")
def test_gpc_order_zero_is_rbm():
    n, tau = 64, 1e-2
    ens = gaussian(n, 2, SEED)
    basis = build_basis(RandomParamSpec("uniform", -1, 1), 0)
    g = GpcStepper(IP, basis, default_quadrature(basis), StepperSpec("rk4", tau))
    ge = GpcEnsemble.from_samples(ens.positions, ens.velocities, 0)
    for k in range(100):
        plan = sample_batch_plan(n, 2, k, SEED)
        ge = rbm_gpc_step(ge, plan, g, tau)
        ens = rbm_step(ens, plan, IP, g.stepper, tau)
    assert np.array_equal(ge.xhat[:, 0], ens.positions)
    assert np.array_equal(ge.vhat[:, 0], ens.velocities)


@criterion(10, "gPC basis, coefficients, degeneration and mode momentum")
@pytest.mark.slow
def test_cs2d_mode_momentum():
    cfg = load_config(scenario="cs2d", seed=SEED)
    assert (cfg.T, cfg.dim, cfg.K) == (4.0, 2, 3)
    bundle = run_cs(cfg)
    s = bundle.summary
    print(f"mode momentum drift {s['max_mode_momentum_drift']:.2e}, diam_v {s['diam_v_initial']:.3f} -> {s['diam_v_final']:.4f}")
    assert s["max_mode_momentum_drift"] <= 1e-10
    assert s["diam_v_final"] < 0.2 * s["diam_v_initial"]


# -- 11 -------------------------------------------------------------------------


@criterion(11, "Wasserstein solvers against sorted coupling and brute force")
def test_wasserstein_oracles():
    rng = np.random.default_rng(SEED)
    for m in range(1, 65):
        a, b = rng.normal(size=(2, m))
        assert abs(wasserstein_1d(a, b) - wasserstein_assignment(a, b)) <= 1e-12
    for m in range(1, 7):
        a, b = rng.normal(size=(2, m, 2))
        cost = np.sum((a[:, None] - b[None]) ** 2, axis=-1)
        best = min(cost[np.arange(m), list(s)].sum() for s in itertools.permutations(range(m)))
        assert abs(wasserstein_assignment(a, b) - math.sqrt(best / m)) <= 1e-12
    for _ in range(100):
        m = int(rng.integers(1, 16))
        a, b, c = rng.normal(size=(3, m, 2))
        ab = wasserstein_assignment(a, b)
        assert wasserstein_assignment(a, a) == 0.0
        assert abs(ab - wasserstein_assignment(b, a)) <= 1e-12
        assert ab >= 0
        assert wasserstein_assignment(a, c) <= ab + wasserstein_assignment(b, c) + 1e-12


# -- 12 -------------------------------------------------------------------------


@criterion(12, "byte-identical CSVs across worker counts")
@pytest.mark.parametrize(
    "args",
    [
        ["gpc", "--scenario", "homogeneous", "--set", "N=200", "--set", "n_replicates=7", "--set", "T=0.1"],
        ["scan", "--scenario", "n_scan", "--set", "n_values=[32,64]", "--set", "n_replicates=30"],
        ["scan", "--scenario", "epsilon_scan", "--set", "n_values=[64,128]", "--set", "trials=40000"],
        ["scan", "--scenario", "tau_scan", "--set", "n_ref=512", "--set", "pool_size=256", "--set", "taus=[0.2,0.1]"],
        ["meanfield", "--set", "n_ref=512", "--set", "pool_size=256"],
        ["rbm", "--set", "N=64", "--set", "T=0.2"],
    ],
    ids=["homogeneous", "n_scan", "epsilon_scan", "tau_scan", "meanfield", "rbm"],
)
def test_determinism_across_workers(args, tmp_path):
    outputs = []
    for workers in (1, 3):
        run_dir = tmp_path / f"w{workers}"
        assert main([*args, "--seed", "7", "--workers", str(workers), "--run-dir", str(run_dir)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(run_dir.glob("*.csv"))})
    assert outputs[0] and outputs[0] == outputs[1]
