# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: grid payoff tensors and exhaustive max coverage.

Rule codes mirror ``searchgame.kernels.RULE_CODES``; the arithmetic matches
the numpy rules in ``searchgame.rules`` branch for branch.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp2, fabs
from libc.stdint cimport uint64_t

cnp.import_array()

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil

cdef enum:
    MAXK = 64
cdef double TIE_TOL = 1e-12


cdef void _rule(int code, const double[:] params, double* q, double* f, int k) noexcept nogil:
    cdef int i, n_ones, npos, sole, N
    cdef double s, top, others, v
    cdef double g[MAXK]
    if code == 0 or code == 3:  # proportional, weighted proportional
        s = 0.0
        for i in range(k):
            g[i] = q[i] * (params[i] if code == 3 else 1.0)
            s += g[i]
        if s > 0.0:
            for i in range(k):
                f[i] = g[i] / s
        else:
            for i in range(k):
                f[i] = 1.0 / k
    elif code == 1:  # markovian
        n_ones = 0
        for i in range(k):
            if q[i] >= 1.0:
                n_ones += 1
        if n_ones > 0:
            for i in range(k):
                f[i] = (1.0 / n_ones) if q[i] >= 1.0 else 0.0
        else:
            s = 0.0
            for i in range(k):
                g[i] = 1.0 / (1.0 - q[i])
                s += g[i]
            for i in range(k):
                f[i] = g[i] / s
    elif code == 2:  # majority
        top = q[0]
        for i in range(1, k):
            if q[i] > top:
                top = q[i]
        n_ones = 0
        for i in range(k):
            if q[i] >= top - TIE_TOL:
                n_ones += 1
        for i in range(k):
            f[i] = (1.0 / n_ones) if q[i] >= top - TIE_TOL else 0.0
    elif code == 4:  # gamma power, k == 3
        s = 0.0
        for i in range(3):
            g[i] = q[i] * exp2(q[(i + 1) % 3] - q[(i + 2) % 3])
            s += g[i]
        if s > 0.0:
            for i in range(3):
                f[i] = g[i] / s
        else:
            for i in range(3):
                f[i] = 1.0 / 3.0
    elif code == 5:  # truncated indifferent, k == N + 1
        N = k - 1
        s = 0.0
        npos = 0
        sole = -1
        for i in range(N):
            s += q[i]
            if q[i] > 0.0:
                npos += 1
                sole = i
        if npos == 1:
            for i in range(k):
                f[i] = 1.0 if i == sole else 0.0
        else:
            v = 0.0
            for i in range(N):
                others = s - q[i]
                f[i] = 0.5 * (1.0 - others)
                if f[i] < 0.0:
                    f[i] = 0.0
                if f[i] > 1.0 / N:
                    f[i] = 1.0 / N
                v += f[i]
            f[N] = 1.0 - v if v < 1.0 else 0.0


def grid_payoffs(int code, double[:] params, double[:, :] G, double[:] gamma, double beta, int k):
    """Engine payoffs at all ``S**k`` grid profiles; see the numpy twin for layout."""
    cdef Py_ssize_t S = G.shape[0], N = G.shape[1]
    cdef Py_ssize_t total = S ** k
    cdef Py_ssize_t p, rem, n
    cdef int i, j
    cdef int a[MAXK]
    cdef double q[MAXK]
    cdef double f[MAXK]
    if k > MAXK:
        raise ValueError("too many engines for the compiled kernel")
    out = np.zeros((k, total))
    cdef double[:, :] U = out
    with nogil:
        for p in range(total):
            rem = p
            for j in range(k - 1, -1, -1):
                a[j] = rem % S
                rem = rem // S
            for n in range(N):
                for j in range(k):
                    q[j] = G[a[j], n]
                _rule(code, params, q, f, k)
                for i in range(k):
                    U[i, p] += gamma[n] * f[i] * (beta + (1.0 - beta) * q[i])
    return out


cdef inline double _weighted(uint64_t* mask, int W, const double[:] w) noexcept nogil:
    cdef double s = 0.0
    cdef int word, b
    cdef uint64_t m
    for word in range(W):
        m = mask[word]
        while m:
            b = __builtin_ctzll(m)
            s += w[word * 64 + b]
            m &= m - 1
    return s



def coverage_exhaustive(cnp.uint64_t[:, :] masks, double[:] weights, int k):
    """Best weighted coverage over nondecreasing ``k``-tuples of atoms (multisets)."""
    cdef Py_ssize_t n = masks.shape[0]
    cdef int W = masks.shape[1]
    cdef int d, word
    cdef double val, best = -1.0
    if k > MAXK:
        raise ValueError("too many engines for the compiled kernel")
    stack = np.zeros((k + 1, W), dtype=np.uint64)
    cdef cnp.uint64_t[:, :] U = stack
    cdef int idx[MAXK]
    cdef int best_idx[MAXK]
    for d in range(k):
        idx[d] = 0
        best_idx[d] = 0
    with nogil:
        # U[d + 1] = U[d] | masks[idx[d]]
        for d in range(k):
            for word in range(W):
                U[d + 1, word] = U[d, word] | masks[idx[d], word]
        while True:
            val = _weighted(&U[k, 0], W, weights)
            if val > best + 1e-15:
                best = val
                for d in range(k):
                    best_idx[d] = idx[d]
            # advance odometer over nondecreasing sequences
            d = k - 1
            while d >= 0 and idx[d] == n - 1:
                d -= 1
            if d < 0:
                break
            idx[d] += 1
            for word in range(W):
                U[d + 1, word] = U[d, word] | masks[idx[d], word]
            d += 1
            while d < k:
                idx[d] = idx[d - 1]
                for word in range(W):
                    U[d + 1, word] = U[d, word] | masks[idx[d], word]
                d += 1
    return best, tuple(best_idx[d] for d in range(k))
