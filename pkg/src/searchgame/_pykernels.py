"""Numpy implementations of the hot kernels (fallback when the extension is absent)."""

from __future__ import annotations

import itertools
from math import comb

import numpy as np

CHUNK_ROWS = 1 << 16


def _digits(idx: np.ndarray, base: int, k: int) -> np.ndarray:
    out = np.empty(idx.shape + (k,), dtype=np.int64)
    rem = idx.copy()
    for j in range(k - 1, -1, -1):
        out[..., j] = rem % base
        rem //= base
    return out


def grid_payoffs(rule, G, gamma, beta, k):
    """Payoff of every engine at every profile of grid strategies.

    Parameters
    ----------
    rule : SelectionRule
        Evaluated in batches of shape ``(rows, N, k)``.
    G : (S, N) ndarray
        Candidate strategies, one per row.
    gamma : (N,) ndarray
        Page probabilities.
    beta : float
    k : int
        Number of engines.

    Returns
    -------
    (k, S**k) ndarray
        Row ``i`` is engine ``i``'s payoff; columns enumerate profiles in
        C order over ``(a_1, ..., a_k)``.
    """
    G = np.asarray(G, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    S = G.shape[0]
    total = S**k
    U = np.empty((k, total))
    for start in range(0, total, CHUNK_ROWS):
        idx = np.arange(start, min(start + CHUNK_ROWS, total))
        a = _digits(idx, S, k)
        Q = np.swapaxes(G[a], 1, 2)  # (rows, N, k)
        F = rule.evaluate_batch(Q)
        U[:, idx] = np.einsum("n,rni->ir", gamma, F * (beta + (1.0 - beta) * Q))
    return U


def coverage_exhaustive(cover, weights, k):
    """Best total weight covered by a multiset of ``k`` atoms.

    ``cover`` is a boolean ``(n_atoms, n_types)`` matrix.  Returns
    ``(value, combo)`` with ``combo`` the lexicographically first optimum.
    """
    cover = np.asarray(cover, dtype=bool)
    weights = np.asarray(weights, dtype=float)
    n = cover.shape[0]
    best, best_combo = -1.0, None
    combos = itertools.combinations_with_replacement(range(n), k)
    while True:
        block = list(itertools.islice(combos, 4096))
        if not block:
            break
        idx = np.array(block)
        covered = cover[idx].any(axis=1)
        vals = covered @ weights
        j = int(np.argmax(vals))
        if vals[j] > best + 1e-15:
            best, best_combo = float(vals[j]), tuple(int(x) for x in idx[j])
    return best, best_combo


def n_multisets(n, k):
    return comb(n + k - 1, k)
