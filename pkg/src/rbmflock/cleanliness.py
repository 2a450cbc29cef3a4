"""Influence lists and clean-particle sets, with Monte Carlo estimates of eps_k.

``L_i`` collects every index whose initial state can have reached particle i
through the batch sequence so far. A particle is clean when its batchmates
were all clean and their lists pairwise disjoint; eps_k is the probability
that particle 0 is not clean after k batch steps.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import ConfigurationError
from .particles import BatchPlan, check_batching, partition_from_permutation

TRIAL_CHUNK = 1000


@dataclass
class InfluenceLists:
    k: int
    lists: list  # sorted tuples of particle indices
    clean: np.ndarray

    @property
    def n(self) -> int:
        return len(self.lists)

    def sizes(self) -> np.ndarray:
        return np.array([len(L) for L in self.lists])


def initial_lists(n: int) -> InfluenceLists:
    return InfluenceLists(k=0, lists=[(i,) for i in range(n)], clean=np.ones(n, dtype=bool))


def advance_lists(state: InfluenceLists, plan: BatchPlan | np.ndarray) -> InfluenceLists:
    """One step of the list recursion for a given partition.

    ``plan`` is a BatchPlan or an (n_batches, p) array of particle indices.
    """
    batches = plan.batches if isinstance(plan, BatchPlan) else np.asarray(plan)
    if batches.size != state.n:
        raise ConfigurationError("partition does not cover the ensemble")
    lists = [()] * state.n
    clean = np.zeros(state.n, dtype=bool)
    for batch in batches:
        members = [int(j) for j in batch]
        previous = [set(state.lists[j]) for j in members]
        ok = all(state.clean[j] for j in members)
        if ok:
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    if previous[a] & previous[b]:
                        ok = False
        union = tuple(sorted(set().union(*previous)))
        for j in members:
            lists[j] = union
            clean[j] = ok
    return InfluenceLists(k=state.k + 1, lists=lists, clean=clean)


def list_invariant_violations(state: InfluenceLists, p: int) -> list:
    """Particles where |L_i| <= p^k fails or equality disagrees with the clean flag."""
    target = p ** state.k
    sizes = state.sizes()
    return [i for i in range(state.n) if sizes[i] > target or ((sizes[i] == target) != bool(state.clean[i]))]


@dataclass
class EpsilonEstimate:
    n: int
    p: int
    k: int
    trials: int
    epsilon_hat: float
    stderr: float
    violations: int
    impossible: bool  # p**k > n: no particle can be clean


def trial_permutations(n, k, trials, seed, chunk_index):
    """Batch permutations for one chunk of trials, shape (trials, k, n).

    Each chunk owns the stream (seed, chunk_index) so results do not depend on
    how chunks are distributed over workers.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(chunk_index)]))
    base = np.broadcast_to(np.arange(n, dtype=np.int64), (trials * k, n))
    return np.ascontiguousarray(rng.permuted(base, axis=1).reshape(trials, k, n))


def _chunk_counts(n, p, k, trials, seed, chunk_index, backend):
    perms = trial_permutations(n, k, trials, seed, chunk_index)
    # canonical batches: sorted p-blocks, the same partition the simulators use
    perms = np.ascontiguousarray(partition_from_permutation(perms, p).reshape(perms.shape))
    unclean, violations = _backend.get(backend).clean_trials(perms, p)
    return int(np.count_nonzero(unclean)), int(violations)


def estimate_epsilon(n: int, p: int, k: int, trials: int, seed: int, backend=None, executor=None) -> EpsilonEstimate:
    """Fraction of batch sequences of length k after which particle 0 is unclean."""
    check_batching(n, p)
    if k < 0 or trials < 1:
        raise ConfigurationError("need k >= 0 and trials >= 1")
    impossible = k > 0 and math.log(n) < k * math.log(p) - 1e-12
    if impossible:
        warnings.warn(f"p^k = {p}^{k} exceeds N = {n}: no particle can be clean", stacklevel=2)
    if k == 0:
        return EpsilonEstimate(n, p, k, trials, 0.0, 0.0, 0, False)
    jobs = []
    for c, start in enumerate(range(0, trials, TRIAL_CHUNK)):
        jobs.append((n, p, k, min(TRIAL_CHUNK, trials - start), seed, c, backend))
    if executor is None:
        results = [_chunk_counts(*job) for job in jobs]
    else:
        results = list(executor.map(_chunk_counts, *zip(*jobs)))
    unclean = sum(r[0] for r in results)
    violations = sum(r[1] for r in results)
    eps = unclean / trials
    stderr = math.sqrt(eps * (1 - eps) / trials)
    return EpsilonEstimate(n, p, k, trials, eps, stderr, violations, impossible)
