# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_pykernels`` holds the numpy equivalents."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()


cdef inline double _psi(double r2, int family, double level, double gamma,
                        const double[::1] kr, const double[::1] kp) noexcept nogil:
    cdef double r, frac
    cdef Py_ssize_t lo, hi, mid, m
    if family == 0:
        return level
    if family == 1:
        if gamma == 1.0:
            return 1.0 / (1.0 + r2)
        if gamma == 0.5:
            return 1.0 / sqrt(1.0 + r2)
        return pow(1.0 + r2, -gamma)
    # tabulated, clamped at both ends
    r = sqrt(r2)
    m = kr.shape[0]
    if r <= kr[0]:
        return kp[0]
    if r >= kr[m - 1]:
        return kp[m - 1]
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if kr[mid] <= r:
            lo = mid
        else:
            hi = mid
    frac = (r - kr[lo]) / (kr[hi] - kr[lo])
    return kp[lo] + frac * (kp[hi] - kp[lo])


def velocity_rhs(const double[:, :, ::1] X, const double[:, :, ::1] V,
                 int family, double level, double gamma,
                 const double[::1] knots_r, const double[::1] knots_psi,
                 double coef):
    """dV[b, i] = coef * sum_j psi(|X[b,j] - X[b,i]|) (V[b,j] - V[b,i])."""
    cdef Py_ssize_t nb = X.shape[0], p = X.shape[1], d = X.shape[2]
    out_arr = np.zeros((nb, p, d), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[::1] acc = np.zeros(d, dtype=np.float64)
    cdef Py_ssize_t b, i, j, c
    cdef double r2, diff, w
    with nogil:
        for b in range(nb):
            for i in range(p):
                for c in range(d):
                    acc[c] = 0.0
                for j in range(p):
                    r2 = 0.0
                    for c in range(d):
                        diff = X[b, j, c] - X[b, i, c]
                        r2 = r2 + diff * diff
                    w = _psi(r2, family, level, gamma, knots_r, knots_psi)
                    for c in range(d):
                        acc[c] = acc[c] + w * (V[b, j, c] - V[b, i, c])
                for c in range(d):
                    out[b, i, c] = coef * acc[c]
    return out_arr


def max_pairwise_distance(const double[:, ::1] P):
    cdef Py_ssize_t n = P.shape[0], d = P.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double best = 0.0, r2, diff
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for c in range(d):
                    diff = P[j, c] - P[i, c]
                    r2 = r2 + diff * diff
                if r2 > best:
                    best = r2
    return sqrt(best)


cdef inline bint _disjoint(const long long[::1] a, Py_ssize_t na,
                           const long long[::1] b, Py_ssize_t nb) noexcept nogil:
    cdef Py_ssize_t i = 0, j = 0
    while i < na and j < nb:
        if a[i] == b[j]:
            return False
        if a[i] < b[j]:
            i += 1
        else:
            j += 1
    return True


cdef inline Py_ssize_t _merge(const long long[::1] a, Py_ssize_t na,
                              const long long[::1] b, Py_ssize_t nb,
                              long long[::1] out) noexcept nogil:
    cdef Py_ssize_t i = 0, j = 0, k = 0
    while i < na and j < nb:
        if a[i] < b[j]:
            out[k] = a[i]; i += 1
        elif b[j] < a[i]:
            out[k] = b[j]; j += 1
        else:
            out[k] = a[i]; i += 1; j += 1
        k += 1
    while i < na:
        out[k] = a[i]; i += 1; k += 1
    while j < nb:
        out[k] = b[j]; j += 1; k += 1
    return k


def clean_trials(const long long[:, :, ::1] perms, int p):
    """Run influence-list recursions for many batch sequences.

    ``perms[t, s]`` is the shuffled index vector whose consecutive p-blocks are
    the batches of step s in trial t. Returns (unclean flag of particle 0 per
    trial, number of (trial, step, particle) triples where the size/clean
    equivalence failed).
    """
    cdef Py_ssize_t trials = perms.shape[0], k = perms.shape[1], n = perms.shape[2]
    cdef Py_ssize_t nbatch = n // p
    cdef long long cap = 1
    cdef Py_ssize_t s
    for s in range(k):
        cap *= p
        if cap >= n:
            cap = n
            break
    cdef Py_ssize_t width = cap if cap > 1 else 1
    lists_a = np.zeros((n, width), dtype=np.int64)
    lists_b = np.zeros((n, width), dtype=np.int64)
    cdef long long[:, ::1] L = lists_a
    cdef long long[:, ::1] Lnew = lists_b
    cdef long long[:, ::1] Ltmp
    cdef Py_ssize_t[::1] size = np.zeros(n, dtype=np.intp)
    cdef Py_ssize_t[::1] size_new = np.zeros(n, dtype=np.intp)
    cdef Py_ssize_t[::1] size_tmp
    cdef unsigned char[::1] clean = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] clean_new = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] clean_tmp
    cdef long long[::1] buf1 = np.zeros(n, dtype=np.int64)
    cdef long long[::1] buf2 = np.zeros(n, dtype=np.int64)
    cdef long long[::1] bt
    unclean_arr = np.zeros(trials, dtype=np.uint8)
    cdef unsigned char[::1] unclean0 = unclean_arr
    cdef long long violations = 0
    cdef Py_ssize_t t, b, a, a2, i, m, m2, nu
    cdef long long target
    cdef bint ok
    with nogil:
        for t in range(trials):
            for i in range(n):
                L[i, 0] = i
                size[i] = 1
                clean[i] = 1
            target = 1
            for s in range(k):
                if target < n + 1:
                    target = target * p
                for b in range(nbatch):
                    ok = True
                    for a in range(p):
                        m = perms[t, s, b * p + a]
                        if not clean[m]:
                            ok = False
                    if ok:
                        for a in range(p):
                            m = perms[t, s, b * p + a]
                            for a2 in range(a + 1, p):
                                m2 = perms[t, s, b * p + a2]
                                if not _disjoint(L[m], size[m], L[m2], size[m2]):
                                    ok = False
                                    break
                            if not ok:
                                break
                    m = perms[t, s, b * p]
                    nu = size[m]
                    for i in range(nu):
                        buf1[i] = L[m, i]
                    for a in range(1, p):
                        m2 = perms[t, s, b * p + a]
                        nu = _merge(buf1, nu, L[m2], size[m2], buf2)
                        bt = buf1; buf1 = buf2; buf2 = bt
                    for a in range(p):
                        m = perms[t, s, b * p + a]
                        for i in range(nu):
                            Lnew[m, i] = buf1[i]
                        size_new[m] = nu
                        clean_new[m] = ok
                Ltmp = L; L = Lnew; Lnew = Ltmp
                size_tmp = size; size = size_new; size_new = size_tmp
                clean_tmp = clean; clean = clean_new; clean_new = clean_tmp
                for i in range(n):
                    if size[i] > target or ((size[i] == target) != (clean[i] != 0)):
                        violations += 1
            unclean0[t] = 0 if clean[0] else 1
    return unclean_arr, int(violations)
