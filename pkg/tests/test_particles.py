import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbmflock.errors import ConfigurationError, DegenerateSystemError
from rbmflock.integrators import StepperSpec
from rbmflock.kernels import KernelSpec
from rbmflock.particles import (
    Ensemble,
    SimulationSettings,
    cs_rhs,
    diagnostics,
    diameter,
    full_step,
    rbm_step,
    sample_batch_plan,
    simulate,
    steps_for,
)

IP = KernelSpec("inverse-power", gamma_base=0.5, psi0=0.05)
RK4 = StepperSpec("rk4", 1e-2, 1)


def random_ensemble(rng, n, d, spread=1.0):
    return Ensemble(rng.normal(size=(n, d)), spread * rng.normal(size=(n, d)))


def test_ensemble_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        Ensemble(np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(ConfigurationError):
        Ensemble(np.array([[np.nan]]), np.array([[0.0]]))


def test_two_particle_rhs_hand_value():
    ens = Ensemble(np.array([[0.0], [1.0]]), np.array([[-1.0], [1.0]]))
    dx, dv = cs_rhs(ens, KernelSpec())
    assert np.array_equal(dv, [[2.0], [-2.0]])
    assert np.array_equal(dx, ens.velocities)


def test_flocked_rhs_is_zero(rng):
    ens = Ensemble(rng.normal(size=(10, 2)), np.tile([0.3, -1.0], (10, 1)))
    _, dv = cs_rhs(ens, IP)
    assert np.array_equal(dv, np.zeros_like(dv))


def test_rhs_rows_sum_to_zero(rng):
    ens = random_ensemble(rng, 5, 3)
    _, dv = cs_rhs(ens, IP)
    assert np.abs(dv.sum(axis=0)).max() <= 1e-14


def test_rhs_brute_force(rng):
    ens = random_ensemble(rng, 7, 2)
    _, dv = cs_rhs(ens, IP)
    ref = np.zeros_like(dv)
    for i in range(7):
        for j in range(7):
            r = np.linalg.norm(ens.positions[j] - ens.positions[i])
            ref[i] += (1 + r * r) ** -0.5 * (ens.velocities[j] - ens.velocities[i])
    np.testing.assert_allclose(dv, ref / 6, rtol=1e-13, atol=1e-15)


def test_single_particle_is_degenerate():
    with pytest.raises(DegenerateSystemError):
        cs_rhs(Ensemble(np.zeros((1, 1)), np.zeros((1, 1))), IP)


@pytest.mark.parametrize("n, p", [(5, 2), (4, 1), (6, 0)])
def test_batch_plan_rejects(n, p):
    with pytest.raises(ConfigurationError):
        sample_batch_plan(n, p, 0, 0)


def test_single_batch_plan():
    plan = sample_batch_plan(4, 4, 3, 9)
    assert plan.batches.tolist() == [[0, 1, 2, 3]]


@given(n_batches=st.integers(1, 20), p=st.integers(2, 5), step=st.integers(0, 1000), seed=st.integers(0, 2**32 - 1))
def test_batch_plan_is_partition(n_batches, p, step, seed):
    n = n_batches * p
    plan = sample_batch_plan(n, p, step, seed)
    assert sorted(plan.batches.ravel().tolist()) == list(range(n))
    assert np.array_equal(np.bincount(plan.assignment), np.full(n_batches, p))
    again = sample_batch_plan(n, p, step, seed)
    assert np.array_equal(plan.batches, again.batches)


def test_pair_frequency_one_third():
    hits = sum(sample_batch_plan(4, 2, k, 5).assignment[0] == sample_batch_plan(4, 2, k, 5).assignment[1] for k in range(30000))
    assert abs(hits / 30000 - 1 / 3) < 0.01


def test_rbm_flocked_translation(rng):
    v = np.tile([0.5, -0.25], (8, 1))
    ens = Ensemble(rng.normal(size=(8, 2)), v)
    out = rbm_step(ens, sample_batch_plan(8, 2, 0, 1), IP, RK4, 0.1)
    assert np.array_equal(out.velocities, v)
    np.testing.assert_allclose(out.positions, ens.positions + 0.1 * v, rtol=0, atol=1e-15)


def test_rbm_per_batch_momentum(rng):
    ens = random_ensemble(rng, 64, 2)
    plan = sample_batch_plan(64, 2, 0, 11)
    out = rbm_step(ens, plan, IP, RK4, 1e-2)
    before = ens.velocities[plan.batches].sum(axis=1)
    after = out.velocities[plan.batches].sum(axis=1)
    scale = np.abs(ens.velocities[plan.batches]).sum(axis=1)
    assert np.all(np.abs(after - before) <= 1e-12 * scale)


def test_rbm_with_p_equal_n_is_full_step(rng):
    ens = random_ensemble(rng, 12, 2)
    full = full_step(ens, IP, RK4, 1e-2)
    rbm = rbm_step(ens, sample_batch_plan(12, 12, 0, 4), IP, RK4, 1e-2)
    assert np.array_equal(full.positions, rbm.positions)
    assert np.array_equal(full.velocities, rbm.velocities)


def test_diameter_examples(rng):
    assert diameter(np.zeros((1, 2)))[0] == 0.0
    ens = Ensemble(np.array([[0.0, 0.0], [3.0, 0.0]]), np.ones((2, 2)))
    d = diagnostics(ens)
    assert (d.diam_x, d.diam_v) == (3.0, 0.0)
    P = rng.normal(size=(100, 3))
    brute = max(np.linalg.norm(a - b) for a in P for b in P)
    assert diameter(P)[0] == pytest.approx(brute, rel=1e-15)


def test_diameter_subsampled_flag(rng):
    val, approx = diameter(rng.normal(size=(50, 2)), exact_limit=20)
    assert approx and val > 0


def test_steps_for():
    assert steps_for(5.0, 1e-2) == 500
    with pytest.raises(ConfigurationError):
        steps_for(0.5, 0.04)


def test_simulate_zero_horizon(rng):
    ens = random_ensemble(rng, 4, 1)
    traj = simulate(ens, IP, SimulationSettings("full", T=0.0))
    assert traj.times == [0.0] and len(traj.diagnostics) == 1


def test_full_diameter_nonincreasing(rng):
    ens = random_ensemble(rng, 32, 2)
    traj = simulate(ens, IP, SimulationSettings("full", tau=1e-2, T=1.0))
    dv = np.array([g.diam_v for g in traj.diagnostics])
    assert np.all(np.diff(dv) <= 1e-12)


def test_rbm_energy_nonincreasing(rng):
    ens = random_ensemble(rng, 64, 1)
    traj = simulate(ens, IP, SimulationSettings("rbm", p=2, tau=1e-2, T=1.0, seed=3))
    ke = np.array([g.kinetic_energy for g in traj.diagnostics])
    assert np.all(np.diff(ke) <= 1e-10)


@pytest.mark.parametrize("mode", ["full", "rbm"])
def test_momentum_conserved(mode, rng):
    ens = random_ensemble(rng, 32, 2)
    traj = simulate(ens, IP, SimulationSettings(mode, p=4, tau=1e-2, T=2.0, seed=2))
    m0 = traj.diagnostics[0].momentum
    for g in traj.diagnostics:
        assert np.abs(g.momentum - m0).max() <= 1e-10 * (1 + np.abs(m0).sum())


def test_flocking_decay_rate(rng):
    # constant psi0 lower bound on the realised support: psi = 1 gives rate kappa
    ens = random_ensemble(rng, 24, 1)
    spec = KernelSpec()
    traj = simulate(ens, spec, SimulationSettings("full", tau=1e-2, T=5.0))
    dv = np.array([g.diam_v for g in traj.diagnostics])
    slope = (np.log(dv[-1]) - np.log(dv[0])) / 5.0
    assert slope <= -spec.kappa * spec.psi0 * 0.8


def test_simulate_snapshots_and_callback(rng):
    ens = random_ensemble(rng, 8, 1)
    seen = []
    traj = simulate(
        ens, IP, SimulationSettings("rbm", p=2, tau=0.1, T=0.5, snapshot_times=(0.0, 0.3), seed=1),
        callback=lambda k, before, after, plan: seen.append((k, plan.step_index)),
    )
    assert set(traj.snapshots) == {0.0, 0.3}
    assert seen == [(k, k) for k in range(5)]
    assert traj.snapshots[0.3].time == pytest.approx(0.3)


def test_simulate_rejects_bad_mode(rng):
    with pytest.raises(ConfigurationError):
        simulate(random_ensemble(rng, 4, 1), IP, SimulationSettings("verlet"))
