import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbmflock.errors import ConfigurationError, GridMismatchError
from rbmflock.gpc import Histogram, PhaseGrid
from rbmflock.metrics import (
    mse_temperature,
    mse_with_stderr,
    subsampled_wasserstein,
    tv_error,
    wasserstein_1d,
    wasserstein_assignment,
)


def brute_force_w(a, b, q):
    m = len(a)
    best = min(sum(np.linalg.norm(a[i] - b[s[i]]) ** q for i in range(m)) for s in itertools.permutations(range(m)))
    return (best / m) ** (1 / q)


@pytest.mark.parametrize("m", [1, 2, 7, 33, 64])
@pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
def test_1d_matches_assignment(m, q, rng):
    a, b = rng.normal(size=(2, m))
    assert abs(wasserstein_1d(a, b, q) - wasserstein_assignment(a, b, q)) <= 1e-12


@pytest.mark.parametrize("m", range(1, 7))
def test_assignment_matches_brute_force(m, rng):
    a, b = rng.normal(size=(2, m, 2))
    assert wasserstein_assignment(a, b) == pytest.approx(brute_force_w(a, b, 2.0), abs=1e-12)


def test_metric_axioms_on_random_triples(rng):
    for _ in range(100):
        m = rng.integers(1, 12)
        a, b, c = rng.normal(size=(3, m, 2))
        ab, ba = wasserstein_assignment(a, b), wasserstein_assignment(b, a)
        assert ab == pytest.approx(ba, abs=1e-12)
        assert wasserstein_assignment(a, a) == 0.0
        assert wasserstein_assignment(a, c) <= ab + wasserstein_assignment(b, c) + 1e-12


def test_translation_oracle(rng):
    a = rng.normal(size=(50, 2))
    shift = np.array([0.3, -0.4])
    assert wasserstein_assignment(a, a + shift) == pytest.approx(0.5, abs=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_1d_permutation_invariant(xs):
    a = np.array(xs)
    assert wasserstein_1d(a, a[::-1]) == 0.0


def test_cap_enforced(rng):
    a, b = rng.normal(size=(2, 40, 2))
    with pytest.raises(ConfigurationError):
        wasserstein_assignment(a, b, cap=20)
    assert wasserstein_assignment(a, b, cap=20, subsample=True, n_rep=4, seed=1) > 0


def test_subsample_stderr_scaling(rng):
    a = rng.normal(size=(2048, 2))
    b = rng.normal(size=(2048, 2)) + 0.2
    ratios = []
    for seed in range(3):
        _, s1 = subsampled_wasserstein(a, b, 2.0, 128, 16, seed=seed)
        _, s4 = subsampled_wasserstein(a, b, 2.0, 128, 64, seed=100 + seed)
        ratios.append(s1 / s4)
    # quadrupling the subsample count halves the standard error
    assert 2 / 1.5 <= np.median(ratios) <= 3


def test_paired_subsampling_keeps_coupling(rng):
    a = rng.normal(size=(1000, 2))
    mean, _ = subsampled_wasserstein(a, a + 1e-3, 2.0, 100, 4, seed=0, paired=True)
    assert mean == pytest.approx(np.sqrt(2) * 1e-3, rel=1e-9)


@pytest.mark.parametrize(
    "a, b",
    [
        (np.zeros((3, 2)), np.zeros((4, 2))),
        (np.zeros((0, 2)), np.zeros((0, 2))),
        (np.array([[np.inf]]), np.array([[0.0]])),
    ],
)
def test_assignment_rejects(a, b):
    with pytest.raises(ConfigurationError):
        wasserstein_assignment(a, b)


def test_q_below_one_rejected():
    with pytest.raises(ConfigurationError):
        wasserstein_1d([0.0], [1.0], q=0.5)


def test_tv_error():
    g = PhaseGrid.uniform(0, 1, 2, 1)
    a = Histogram(g, np.array([2.0, 0.0]))
    b = Histogram(g, np.array([0.0, 2.0]))
    assert tv_error(a, b) == 2.0 and tv_error(a, a) == 0.0
    with pytest.raises(GridMismatchError):
        tv_error(a, Histogram(PhaseGrid.uniform(0, 1, 4, 1), np.zeros(4)))


def test_mse_helpers():
    assert mse_temperature([1.0, 3.0], 2.0) == 1.0
    mse, se = mse_with_stderr([1.0, 3.0, 2.0], [2.0, 2.0, 2.0])
    assert mse == pytest.approx(2 / 3) and se > 0
    with pytest.raises(ConfigurationError):
        mse_temperature([], 0.0)
