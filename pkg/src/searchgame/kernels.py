"""Hot-loop dispatch: compiled extension when built, numpy fallback otherwise.

``BACKEND`` reports which implementation was picked at import time.  Rules
without a compiled counterpart (e.g. ``induced_markov``) always take the
numpy path.
"""

from __future__ import annotations

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"

RULE_CODES = {
    "proportional": 0,
    "markovian": 1,
    "majority": 2,
    "weighted_proportional": 3,
    "gamma_power": 4,
    "truncated_indifferent": 5,
}


def _rule_params(rule) -> np.ndarray:
    if rule.name == "weighted_proportional":
        return np.ascontiguousarray(rule.weights, dtype=float)
    return np.zeros(max(rule.num_engines, 1))


def grid_payoffs(rule, G, gamma, beta, k, backend=None):
    backend = backend or BACKEND
    if backend == "cython" and _ckernels is not None and rule.name in RULE_CODES:
        return _ckernels.grid_payoffs(
            RULE_CODES[rule.name],
            _rule_params(rule),
            np.ascontiguousarray(G, dtype=float),
            np.ascontiguousarray(gamma, dtype=float),
            float(beta),
            int(k),
        )
    return _pykernels.grid_payoffs(rule, G, gamma, beta, k)


def pack_masks(cover: np.ndarray) -> np.ndarray:
    """Pack a boolean ``(n_atoms, n_types)`` matrix into 64-bit words."""
    cover = np.asarray(cover, dtype=bool)
    n, t = cover.shape
    words = (t + 63) // 64
    out = np.zeros((n, words), dtype=np.uint64)
    for j in range(t):
        out[:, j // 64] |= cover[:, j].astype(np.uint64) << np.uint64(j % 64)
    return out


def coverage_exhaustive(cover, weights, k, backend=None):
    backend = backend or BACKEND
    if backend == "cython" and _ckernels is not None:
        return _ckernels.coverage_exhaustive(
            pack_masks(cover), np.ascontiguousarray(weights, dtype=float), int(k)
        )
    return _pykernels.coverage_exhaustive(cover, weights, k)
