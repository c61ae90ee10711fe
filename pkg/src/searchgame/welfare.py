"""Social optimum, price of anarchy/stability and welfare structure checks."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import n_multisets
from .equilibrium import SizeLimitError, WrongGameError
from .game import Game
from .rules import PropertyReport, check_non_indifferent

EXHAUSTIVE_LIMIT = 10**6


class NoEquilibriumError(ValueError):
    """PoA/PoS requested with an empty equilibrium list."""


@dataclass
class OptimumResult:
    profile: list  # one atom (page tuple / chain) per engine
    welfare: float
    method: str  # exhaustive | top_k | greedy
    approximate: bool = False
    label: str = "optimum"  # or "coverage upper bound"

    def to_json(self):
        return {
            "profile": [list(a) for a in self.profile],
            "welfare": self.welfare,
            "method": self.method,
            "approximate": self.approximate,
            "label": self.label,
        }


def _rule_is_non_indifferent(rule) -> bool:
    flag = rule.non_indifferent
    if flag is None:
        flag = check_non_indifferent(rule, samples=50).passed
    return bool(flag)


def _cover(game: Game) -> np.ndarray:
    return (game.hit > 0.0).T  # (atoms, types)


def social_optimum(game: Game, mode: str = "auto") -> OptimumResult:
    """Best coverage welfare over deterministic profiles.

    ``mode`` is ``top_k`` (singleton only), ``exhaustive`` (certified, at most
    ``10**6`` multisets of atoms), ``greedy`` (lazy greedy, flagged
    approximate) or ``auto`` (the cheapest exact method that fits).
    """
    k = game.k
    if mode == "auto":
        if game.singleton:
            mode = "top_k"
        elif n_multisets(game.n_atoms, k) <= EXHAUSTIVE_LIMIT:
            mode = "exhaustive"
        else:
            mode = "greedy"
    w = game.type_probs
    if mode == "top_k":
        if not game.singleton:
            raise WrongGameError("top_k optimum needs a singleton game")
        p = game.gamma.page_probs()
        order = np.argsort(-p, kind="stable")
        picks = [int(order[min(i, p.size - 1)]) for i in range(k)]
        value = float(p[order[:k]].sum())
        result = OptimumResult([(n,) for n in picks], value, "top_k")
    elif mode == "exhaustive":
        count = n_multisets(game.n_atoms, k)
        if count > EXHAUSTIVE_LIMIT:
            raise SizeLimitError(f"{count} atom multisets exceed the limit {EXHAUSTIVE_LIMIT}")
        value, combo = kernels.coverage_exhaustive(_cover(game), w, k)
        result = OptimumResult([game.atoms[j] for j in combo], float(value), "exhaustive")
    elif mode == "greedy":
        result = _lazy_greedy(game)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not _rule_is_non_indifferent(game.rule):
        result.label = "coverage upper bound"
    return result


def _lazy_greedy(game: Game) -> OptimumResult:
    cover = _cover(game)
    w = game.type_probs
    covered = np.zeros(cover.shape[1], dtype=bool)
    gains = cover @ w
    heap = [(-g, j) for j, g in enumerate(gains)]
    heapq.heapify(heap)
    picks = []
    for _ in range(game.k):
        while True:
            neg, j = heapq.heappop(heap)
            fresh = float(w[cover[j] & ~covered].sum())
            if not heap or fresh >= -heap[0][0] - 1e-15:
                break
            heapq.heappush(heap, (-fresh, j))
        picks.append(j)
        covered |= cover[j]
        heapq.heappush(heap, (-0.0, j))
    return OptimumResult(
        [game.atoms[j] for j in picks], float(w[covered].sum()), "greedy", approximate=True
    )


def equilibrium_welfares(game: Game, equilibria) -> list:
    out = []
    for e in equilibria:
        if isinstance(e, (int, float, np.floating)):
            out.append(float(e))
        else:
            W = e if isinstance(e, np.ndarray) else game.weight_matrix(e)
            out.append(game.welfare(W))
    return out


def price_of_anarchy(game: Game, equilibria, opt: OptimumResult) -> float:
    """``opt.welfare`` over the worst equilibrium welfare."""
    welfares = equilibrium_welfares(game, equilibria)
    if not welfares:
        raise NoEquilibriumError("no equilibrium given; PoA is undefined")
    worst = min(welfares)
    return np.inf if worst <= 0.0 else opt.welfare / worst


def price_of_stability(game: Game, equilibria, opt: OptimumResult) -> float:
    """``opt.welfare`` over the best equilibrium welfare."""
    welfares = equilibrium_welfares(game, equilibria)
    if not welfares:
        raise NoEquilibriumError("no equilibrium given; PoS is undefined")
    best = max(welfares)
    return np.inf if best <= 0.0 else opt.welfare / best


# -- structure of the deterministic game ------------------------------------------


def _assignment_q(game: Game, pairs) -> np.ndarray:
    """Satisfaction matrix ``(types, k)`` for a set of ``(engine, slot, page)`` triples."""
    q = np.zeros((len(game.gamma.types), game.k))
    for r, t in enumerate(game.gamma.types):
        for i, slot, page in pairs:
            if slot < t.threshold and page in t.pages:
                q[r, i] = 1.0
    return q


def _random_assignment(game: Game, rng, fill: float):
    T = game.config.max_threshold
    N = game.config.num_pages
    pairs = set()
    for i in range(game.k):
        pages = rng.permutation(N)[:T]
        for slot in range(T):
            if rng.random() < fill:
                pairs.add((i, slot, int(pages[slot])))
    return pairs


def _can_add(pairs, x) -> bool:
    i, slot, page = x
    return all(not (j == i and (s == slot or p == page)) for j, s, p in pairs)


def check_welfare_structure(game: Game, samples: int = 100, seed: int = 42, tol: float = 1e-10):
    """Monotonicity and submodularity of welfare over (slot, page) assignment sets.

    Each engine's deterministic strategy is a set of ``(slot, page)`` pairs
    (one page per slot, pages distinct).  Samples nested pairs ``A <= B`` and
    an extra pair ``x`` addable to ``B``, and checks

    * ``W(A) <= W(B)``
    * ``W(A + x) - W(A) >= W(B + x) - W(B)``
    * at ``beta = 0``: ``sum_i payoff_i <= W`` and
      ``payoff_i(B) >= W(B) - W(B without engine i)``.
    """
    rng = np.random.default_rng(seed)
    T, N = game.config.max_threshold, game.config.num_pages
    all_pairs = [(i, s, p) for i in range(game.k) for s in range(T) for p in range(N)]
    wel = lambda P: float(game.welfare_from_q(_assignment_q(game, P)))
    checked = 0
    for _ in range(samples):
        B = _random_assignment(game, rng, fill=0.7)
        A = {x for x in B if rng.random() < 0.5}
        options = [x for x in all_pairs if x not in B and _can_add(B, x)]
        wA, wB = wel(A), wel(B)
        checked += 1
        if wA > wB + tol:
            return PropertyReport(
                "welfare_structure",
                False,
                checked=checked,
                witness={"violation": "monotone", "A": sorted(A), "B": sorted(B)},
            )
        if options:
            x = options[rng.integers(len(options))]
            gain_a = wel(A | {x}) - wA
            gain_b = wel(B | {x}) - wB
            if gain_a < gain_b - tol:
                return PropertyReport(
                    "welfare_structure",
                    False,
                    checked=checked,
                    witness={
                        "violation": "submodular",
                        "A": sorted(A),
                        "B": sorted(B),
                        "x": list(x),
                        "gain_A": gain_a,
                        "gain_B": gain_b,
                    },
                )
        if game.beta == 0.0:
            pay = game.payoffs_from_q(_assignment_q(game, B))
            if pay.sum() > wB + tol:
                return PropertyReport(
                    "welfare_structure",
                    False,
                    checked=checked,
                    witness={"violation": "payoff_sum", "B": sorted(B), "sum": float(pay.sum())},
                )
            for i in range(game.k):
                without = wel({x for x in B if x[0] != i})
                if pay[i] < wB - without - tol:
                    return PropertyReport(
                        "welfare_structure",
                        False,
                        checked=checked,
                        witness={"violation": "valid_utility", "engine": i, "B": sorted(B)},
                    )
    return PropertyReport("welfare_structure", True, checked=checked)
