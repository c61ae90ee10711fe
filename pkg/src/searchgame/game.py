"""Game data model and evaluation of satisfaction, payoffs and welfare.

A user type is a desired page set plus a patience threshold.  Engines play
distributions over *prefix chains*: ordered tuples of ``max_threshold``
distinct pages, where the first ``t`` entries are the pages shown in the top
``t`` slots.  Two permutations that agree on the first ``max_threshold``
slots are interchangeable for every user, so chains are the natural atoms.

In the singleton game (every user has threshold 1 and one desired page) a
strategy is simply a probability vector over pages.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12
GENERAL_POSITION_MAX_SUPPORT = 20


class InvalidGameError(ValueError):
    """Raised when game data violates its invariants."""


@dataclass(frozen=True)
class UserType:
    pages: frozenset
    threshold: int = 1

    def __post_init__(self):
        object.__setattr__(self, "pages", frozenset(int(p) for p in self.pages))
        if not self.pages:
            raise InvalidGameError("user type needs a nonempty desired page set")
        if self.threshold < 1:
            raise InvalidGameError(f"threshold must be >= 1, got {self.threshold}")
        if min(self.pages) < 0:
            raise InvalidGameError("page indices must be nonnegative")


@dataclass(frozen=True)
class GameConfig:
    beta: float
    num_engines: int
    num_pages: int
    max_threshold: int = 1

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidGameError(f"beta must lie in [0, 1], got {self.beta}")
        if self.num_engines < 2:
            raise InvalidGameError("need at least two engines")
        if self.num_pages < 1:
            raise InvalidGameError("need at least one page")
        if not 1 <= self.max_threshold <= self.num_pages:
            raise InvalidGameError(
                f"max_threshold must lie in [1, num_pages], got {self.max_threshold}"
            )


@dataclass(frozen=True)
class TypeDistribution:
    """Commonly known distribution over user types.

    Parameters
    ----------
    types : sequence of UserType
        Distinct user types in the support.
    probs : sequence of float
        Probability of each type; must sum to one within ``1e-12`` unless
        ``normalize`` is set.
    num_pages : int
        Size of the page universe.  Every page must be desired by some type.
    """

    types: tuple
    probs: tuple
    num_pages: int
    normalize: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        types = tuple(self.types)
        probs = np.asarray(self.probs, dtype=float)
        if len(types) != len(probs) or not types:
            raise InvalidGameError("types and probs must be nonempty and aligned")
        if len(set(types)) != len(types):
            raise InvalidGameError("type entries must be distinct")
        if np.any(probs <= 0.0) or np.any(probs > 1.0):
            raise InvalidGameError("type probabilities must lie in (0, 1]")
        if self.normalize:
            probs = probs / probs.sum()
        elif abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidGameError(f"type probabilities sum to {probs.sum()!r}, not 1")
        covered = set()
        for t in types:
            if max(t.pages) >= self.num_pages:
                raise InvalidGameError(f"page index out of range in {sorted(t.pages)}")
            covered |= t.pages
        missing = set(range(self.num_pages)) - covered
        if missing:
            raise InvalidGameError(f"pages {sorted(missing)} satisfy no user type")
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))

    @classmethod
    def singleton(cls, page_probs, normalize=False) -> "TypeDistribution":
        """Singleton-game distribution: type ``n`` wants page ``n`` with threshold 1."""
        page_probs = list(page_probs)
        types = tuple(UserType(frozenset([n]), 1) for n in range(len(page_probs)))
        return cls(types, tuple(page_probs), len(page_probs), normalize=normalize)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def max_threshold(self) -> int:
        return max(t.threshold for t in self.types)

    @property
    def is_singleton(self) -> bool:
        return all(t.threshold == 1 and len(t.pages) == 1 for t in self.types)

    def page_probs(self) -> np.ndarray:
        """Per-page probabilities for a singleton distribution (index = page)."""
        if not self.is_singleton:
            raise InvalidGameError("page_probs is only defined for the singleton game")
        out = np.zeros(self.num_pages)
        for t, p in zip(self.types, self.probs):
            out[next(iter(t.pages))] += p
        return out


@dataclass(frozen=True)
class SingletonStrategy:
    probs: tuple

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidGameError("singleton strategy must be a nonempty vector")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise InvalidGameError("strategy entries must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidGameError(f"strategy sums to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in probs))

    @classmethod
    def vertex(cls, num_pages: int, page: int) -> "SingletonStrategy":
        v = np.zeros(num_pages)
        v[page] = 1.0
        return cls(tuple(v))

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def is_deterministic(self) -> bool:
        return max(self.probs) == 1.0


@dataclass(frozen=True)
class PrefixChainStrategy:
    """Distribution over prefix chains.

    ``atoms`` is a sequence of ``(chain, weight)`` pairs; ``chain`` is a tuple
    of distinct pages whose first ``t`` entries form the slot-``t`` prefix set.
    """

    atoms: tuple

    def __post_init__(self):
        merged: dict = {}
        length = None
        for chain, weight in self.atoms:
            chain = tuple(int(p) for p in chain)
            if len(set(chain)) != len(chain) or not chain:
                raise InvalidGameError(f"chain {chain} must list distinct pages")
            if length is None:
                length = len(chain)
            elif len(chain) != length:
                raise InvalidGameError("all chains of a strategy must share one length")
            if weight <= 0.0:
                raise InvalidGameError("chain weights must be positive")
            merged[chain] = merged.get(chain, 0.0) + float(weight)
        total = sum(merged.values())
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidGameError(f"chain weights sum to {total!r}, not 1")
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @classmethod
    def deterministic(cls, chain) -> "PrefixChainStrategy":
        return cls(((tuple(chain), 1.0),))

    @property
    def length(self) -> int:
        return len(self.atoms[0][0])

    @property
    def is_deterministic(self) -> bool:
        return len(self.atoms) == 1


def _hits(chain, user_type: UserType) -> bool:
    return not user_type.pages.isdisjoint(chain[: user_type.threshold])


def satisfaction_probability(strategy, user_type: UserType) -> float:
    """Probability that ``strategy`` shows a desired page within the threshold."""
    if isinstance(strategy, SingletonStrategy):
        if user_type.threshold < 1:
            raise InvalidGameError("threshold must be positive")
        v = strategy.probs
        return float(sum(v[p] for p in user_type.pages if p < len(v)))
    if user_type.threshold > strategy.length:
        raise InvalidGameError(
            f"type threshold {user_type.threshold} exceeds chain length {strategy.length}"
        )
    return float(sum(w for chain, w in strategy.atoms if _hits(chain, user_type)))


def profile_satisfaction(profile: Sequence, user_type: UserType, num_engines=None) -> np.ndarray:
    if num_engines is not None and len(profile) != num_engines:
        raise InvalidGameError(f"profile has {len(profile)} strategies, expected {num_engines}")
    return np.array([satisfaction_probability(s, user_type) for s in profile])


def all_chains(num_pages: int, length: int) -> list:
    """Every prefix chain of ``length`` distinct pages, in lexicographic order."""
    return list(itertools.permutations(range(num_pages), length))


class Game:
    """A fully specified game: configuration, type distribution and selection rule.

    Strategies are handled internally as a ``(k, n_atoms)`` weight matrix over
    the atom list.  For the singleton game the atoms are the pages themselves.
    """

    def __init__(self, config: GameConfig, gamma: TypeDistribution, rule):
        if gamma.num_pages != config.num_pages:
            raise InvalidGameError("type distribution and config disagree on num_pages")
        if gamma.max_threshold > config.max_threshold:
            raise InvalidGameError(
                f"type threshold {gamma.max_threshold} exceeds max_threshold "
                f"{config.max_threshold}"
            )
        if rule.num_engines != config.num_engines:
            raise InvalidGameError(
                f"rule is defined for {rule.num_engines} engines, game has {config.num_engines}"
            )
        self.config = config
        self.gamma = gamma
        self.rule = rule
        self.singleton = gamma.is_singleton and config.max_threshold == 1
        self.type_probs = gamma.p
        if self.singleton:
            self.atoms = [(n,) for n in range(config.num_pages)]
            hit = np.zeros((len(gamma.types), config.num_pages))
            for r, t in enumerate(gamma.types):
                hit[r, next(iter(t.pages))] = 1.0
        else:
            self.atoms = all_chains(config.num_pages, config.max_threshold)
            hit = np.array(
                [[1.0 if _hits(c, t) else 0.0 for c in self.atoms] for t in gamma.types]
            )
        self.hit = hit
        self._atom_index = {a: j for j, a in enumerate(self.atoms)}

    @property
    def k(self) -> int:
        return self.config.num_engines

    @property
    def beta(self) -> float:
        return self.config.beta

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    # -- conversions -------------------------------------------------------
    def weights_of(self, strategy) -> np.ndarray:
        if isinstance(strategy, SingletonStrategy):
            if not self.singleton:
                raise InvalidGameError("singleton strategy given for a non-singleton game")
            v = strategy.vector
            if v.size != self.config.num_pages:
                raise InvalidGameError("strategy length does not match num_pages")
            return v.copy()
        if isinstance(strategy, PrefixChainStrategy):
            w = np.zeros(self.n_atoms)
            for chain, weight in strategy.atoms:
                key = chain[: self.config.max_threshold]
                if key not in self._atom_index:
                    raise InvalidGameError(f"chain {chain} is not valid for this game")
                w[self._atom_index[key]] += weight
            return w
        w = np.asarray(strategy, dtype=float)
        if w.shape != (self.n_atoms,):
            raise InvalidGameError(f"weight vector must have shape ({self.n_atoms},)")
        return w

    def weight_matrix(self, profile: Sequence) -> np.ndarray:
        if len(profile) != self.k:
            raise InvalidGameError(f"profile has {len(profile)} strategies, expected {self.k}")
        return np.stack([self.weights_of(s) for s in profile])

    def strategy_of(self, weights):
        weights = np.asarray(weights, dtype=float)
        if self.singleton:
            return SingletonStrategy(tuple(weights))
        atoms = tuple((self.atoms[j], float(w)) for j, w in enumerate(weights) if w > 0.0)
        return PrefixChainStrategy(atoms)

    # -- evaluation --------------------------------------------------------
    def satisfaction(self, W: np.ndarray) -> np.ndarray:
        """Satisfaction matrix of shape ``(..., n_types, k)`` for weights ``(..., k, n_atoms)``."""
        Q = np.einsum("ta,...ia->...ti", self.hit, W)
        Q = np.clip(Q, 0.0, 1.0)
        # boundary values switch rule branches; snap rounding residue
        Q[Q > 1.0 - PROB_TOL] = 1.0
        Q[Q < PROB_TOL] = 0.0
        return Q

    def payoffs_from_q(self, Q: np.ndarray) -> np.ndarray:
        F = self.rule.evaluate_batch(Q)
        beta = self.beta
        return np.einsum("t,...ti->...i", self.type_probs, F * (beta + (1.0 - beta) * Q))

    def welfare_from_q(self, Q: np.ndarray) -> np.ndarray:
        F = self.rule.evaluate_batch(Q)
        return np.einsum("t,...ti->...", self.type_probs, F * Q)

    def payoffs(self, W: np.ndarray) -> np.ndarray:
        return self.payoffs_from_q(self.satisfaction(W))

    def welfare(self, W: np.ndarray) -> float:
        return float(self.welfare_from_q(self.satisfaction(W)))

    def engine_payoff_many(self, W: np.ndarray, i: int, candidates: np.ndarray) -> np.ndarray:
        """Payoff of engine ``i`` for each row of ``candidates`` with opponents fixed."""
        candidates = np.atleast_2d(candidates)
        Wb = np.broadcast_to(W, (candidates.shape[0],) + W.shape).copy()
        Wb[:, i, :] = candidates
        return self.payoffs(Wb)[:, i]


def engine_payoffs(profile, rule, config: GameConfig, gamma: TypeDistribution) -> np.ndarray:
    """Expected payoff of every engine under a pure strategy profile."""
    game = Game(config, gamma, rule)
    return game.payoffs(game.weight_matrix(profile))


def welfare(profile, rule, config: GameConfig, gamma: TypeDistribution) -> float:
    """Probability that a random user is satisfied by the engine they pick."""
    game = Game(config, gamma, rule)
    return game.welfare(game.weight_matrix(profile))


@dataclass(frozen=True)
class GeneralPositionResult:
    status: str  # "general", "degenerate" or "unchecked"
    witness: tuple = ()

    def __bool__(self) -> bool:
        return self.status == "general"


def is_general_position(gamma, tol: float = 1e-12) -> GeneralPositionResult:
    """Check that all subset sums of the type probabilities are distinct.

    ``gamma`` may be a :class:`TypeDistribution` or a plain probability vector.
    Supports larger than 20 entries are reported as ``"unchecked"``.
    """
    p = gamma.p if isinstance(gamma, TypeDistribution) else np.asarray(gamma, dtype=float)
    n = p.size
    if n > GENERAL_POSITION_MAX_SUPPORT:
        return GeneralPositionResult("unchecked")
    # subset sums indexed by bitmask, built incrementally
    sums = np.zeros(1)
    for x in p:
        sums = np.concatenate([sums, sums + x])
    order = np.argsort(sums, kind="stable")
    gaps = np.diff(sums[order])
    bad = np.flatnonzero(gaps <= tol)
    if bad.size:
        a, b = int(order[bad[0]]), int(order[bad[0] + 1])
        subset = lambda m: tuple(j for j in range(n) if m >> j & 1)
        return GeneralPositionResult("degenerate", (subset(a), subset(b)))
    return GeneralPositionResult("general")


def perturb_general_position(gamma, scale: float, seed: int = 42):
    """Add seeded noise of magnitude ``scale`` to the probabilities and renormalize.

    Returns an object of the same kind as ``gamma`` (distribution or vector)
    together with the re-check result.
    """
    rng = np.random.default_rng(seed)
    p = gamma.p if isinstance(gamma, TypeDistribution) else np.asarray(gamma, dtype=float)
    for _ in range(100):
        q = p + scale * rng.uniform(-1.0, 1.0, size=p.size)
        if np.any(q <= 0.0):
            continue
        q = q / q.sum()
        check = is_general_position(q)
        if check.status != "degenerate":
            break
    else:
        raise InvalidGameError("could not perturb into general position")
    if isinstance(gamma, TypeDistribution):
        return TypeDistribution(gamma.types, tuple(q), gamma.num_pages, normalize=True), check
    return q, check
