"""Numpy implementations of the hot kernels in ``_core.pyx``.

Same signatures and semantics; used when the extension is not built or when
``RBMFLOCK_PURE_PYTHON`` is set.
"""
import numpy as np

_CHUNK_ELEMS = 1 << 22


def _psi(r2, family, level, gamma, knots_r, knots_psi):
    if family == 0:
        return np.full(r2.shape, level)
    if family == 1:
        if gamma == 1.0:
            return 1.0 / (1.0 + r2)
        if gamma == 0.5:
            return 1.0 / np.sqrt(1.0 + r2)
        return np.power(1.0 + r2, -gamma)
    return np.interp(np.sqrt(r2), knots_r, knots_psi)


def velocity_rhs(X, V, family, level, gamma, knots_r, knots_psi, coef):
    X = np.asarray(X, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    nb, p, d = X.shape
    out = np.empty_like(V)
    rows = max(1, _CHUNK_ELEMS // max(1, nb * p * d))
    for i0 in range(0, p, rows):
        i1 = min(p, i0 + rows)
        dx = X[:, None, :, :] - X[:, i0:i1, None, :]
        r2 = np.sum(dx * dx, axis=-1)
        w = _psi(r2, family, level, gamma, knots_r, knots_psi)
        dv = V[:, None, :, :] - V[:, i0:i1, None, :]
        out[:, i0:i1] = coef * np.sum(w[..., None] * dv, axis=2)
    return out


def max_pairwise_distance(P):
    P = np.asarray(P, dtype=np.float64)
    n, d = P.shape
    best = 0.0
    rows = max(1, _CHUNK_ELEMS // max(1, n * d))
    for i0 in range(0, n, rows):
        blk = P[i0:i0 + rows]
        diff = blk[:, None, :] - P[None, :, :]
        best = max(best, float(np.max(np.sum(diff * diff, axis=-1), initial=0.0)))
    return float(np.sqrt(best))


def clean_trials(perms, p):
    """Bitset version: each influence list is a row of uint64 words."""
    perms = np.asarray(perms, dtype=np.int64)
    trials, k, n = perms.shape
    nbatch = n // p
    words = (n + 63) // 64
    idx = np.arange(n)
    lists = np.zeros((trials, n, words), dtype=np.uint64)
    lists[:, idx, idx // 64] = np.left_shift(np.uint64(1), (idx % 64).astype(np.uint64))
    clean = np.ones((trials, n), dtype=bool)
    t_ix = np.arange(trials)[:, None, None]
    violations = 0
    target = 1
    for s in range(k):
        if target < n + 1:
            target *= p
        members = perms[:, s, :].reshape(trials, nbatch, p)
        lm = lists[t_ix, members]
        ok = clean[t_ix, members].all(axis=2)
        for a in range(p):
            for b in range(a + 1, p):
                ok &= ~np.any(lm[:, :, a] & lm[:, :, b], axis=-1)
        union = np.bitwise_or.reduce(lm, axis=2)
        lists = np.empty_like(lists)
        lists[t_ix, members] = union[:, :, None, :]
        clean = np.empty_like(clean)
        clean[t_ix, members] = np.broadcast_to(ok[:, :, None], members.shape)
        size = np.bitwise_count(lists).sum(axis=-1, dtype=np.int64)
        violations += int(np.count_nonzero((size > target) | ((size == target) != clean)))
    return (~clean[:, 0]).astype(np.uint8), violations
