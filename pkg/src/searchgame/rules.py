"""Selection rules and sampled certification of their structural properties.

A selection rule maps the satisfaction profile ``q`` (one entry per engine)
to a distribution over engines.  Every rule here evaluates on arrays of
shape ``(..., k)`` so payoff sweeps stay vectorized.

The property checks sample a grid plus random points.  A passing report
means no violation was found on the sample, not a proof.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SUM_TOL = 1e-12
TIE_TOL = 1e-12


class RuleDomainError(ValueError):
    """Satisfaction profile outside ``[0, 1]^k`` or of the wrong length."""


class RuleConfigError(ValueError):
    """Rule parameters inconsistent with the engine count."""


class SelectionRule:
    """Base class.  Subclasses implement :meth:`_evaluate`."""

    name = "abstract"
    symmetric = False
    smooth = True
    # None means "decide by sampling"
    non_indifferent = True

    def __init__(self, num_engines: int):
        if num_engines < 2:
            raise RuleConfigError("a selection rule needs at least two engines")
        self.num_engines = int(num_engines)

    @property
    def relabeling_groups(self):
        """Engine groups whose members can be swapped without changing the rule."""
        k = self.num_engines
        return [tuple(range(k))] if self.symmetric else [(i,) for i in range(k)]

    def _evaluate(self, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate_batch(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        if Q.shape[-1] != self.num_engines:
            raise RuleDomainError(
                f"profile has {Q.shape[-1]} entries, rule expects {self.num_engines}"
            )
        return self._evaluate(Q)

    def evaluate(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.ndim != 1:
            raise RuleDomainError("evaluate expects a single profile")
        if np.any(q < 0.0) or np.any(q > 1.0) or np.any(np.isnan(q)):
            raise RuleDomainError(f"satisfaction profile {q.tolist()} outside [0, 1]")
        return self.evaluate_batch(q)

    @property
    def params(self) -> dict:
        return {}

    def to_json(self) -> dict:
        return {"name": self.name, "params": self.params}

    def __repr__(self):
        return f"{type(self).__name__}(k={self.num_engines}, {self.params})"


class Proportional(SelectionRule):
    name = "proportional"
    symmetric = True
    smooth = False  # jump at q = 0

    def _evaluate(self, Q):
        s = Q.sum(axis=-1, keepdims=True)
        safe = np.where(s > 0.0, s, 1.0)
        return np.where(s > 0.0, Q / safe, 1.0 / self.num_engines)


class MarkovianBasic(SelectionRule):
    """Stationary law of a user who stays after success and switches uniformly after failure."""

    name = "markovian"
    symmetric = True
    smooth = False

    def _evaluate(self, Q):
        ones = Q >= 1.0
        n_ones = ones.sum(axis=-1, keepdims=True)
        b = 1.0 / np.where(ones, 1.0, 1.0 - Q)
        interior = b / b.sum(axis=-1, keepdims=True)
        at_one = ones / np.maximum(n_ones, 1)
        return np.where(n_ones > 0, at_one, interior)


class Majority(SelectionRule):
    """Uniform over the engines with maximal satisfaction probability."""

    name = "majority"
    symmetric = True
    smooth = False

    def _evaluate(self, Q):
        top = Q.max(axis=-1, keepdims=True)
        best = Q >= top - TIE_TOL
        return best / best.sum(axis=-1, keepdims=True)


class WeightedProportional(SelectionRule):
    name = "weighted_proportional"
    smooth = False

    def __init__(self, num_engines, weights):
        super().__init__(num_engines)
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.num_engines,):
            raise RuleConfigError(f"need {self.num_engines} weights, got {w.size}")
        if np.any(w <= 0.0):
            raise RuleConfigError("weights must be positive")
        self.weights = w

    @property
    def params(self):
        return {"weights": self.weights.tolist()}

    def _evaluate(self, Q):
        wq = Q * self.weights
        s = wq.sum(axis=-1, keepdims=True)
        safe = np.where(s > 0.0, s, 1.0)
        return np.where(s > 0.0, wq / safe, 1.0 / self.num_engines)


class GammaPower(SelectionRule):
    """Three-engine rule with scores ``q_i * 2**(q_{i+1} - q_{i+2})`` (indices mod 3).

    Invariant only under cyclic relabeling, so it is not flagged symmetric.
    """

    name = "gamma_power"
    smooth = False

    def __init__(self, num_engines=3):
        super().__init__(num_engines)
        if self.num_engines != 3:
            raise RuleConfigError("gamma_power is defined for exactly 3 engines")

    def _evaluate(self, Q):
        nxt = np.roll(Q, -1, axis=-1)
        nxt2 = np.roll(Q, -2, axis=-1)
        g = Q * np.exp2(nxt - nxt2)
        s = g.sum(axis=-1, keepdims=True)
        safe = np.where(s > 0.0, s, 1.0)
        return np.where(s > 0.0, g / safe, 1.0 / 3.0)


class TruncatedIndifferent(SelectionRule):
    """Rule for ``N`` regular engines plus one residual engine (``k = N + 1``).

    A regular engine that is the only regular engine with positive
    satisfaction takes the user outright.  Otherwise regular engine ``i``
    gets ``clip((1 - sum of other regular q) / 2, 0, 1/N)`` and the last
    engine receives what remains.
    """

    name = "truncated_indifferent"
    smooth = False
    non_indifferent = False

    def __init__(self, num_engines, pages):
        super().__init__(num_engines)
        self.pages = int(pages)
        if self.num_engines != self.pages + 1:
            raise RuleConfigError(
                f"truncated_indifferent needs k = N + 1, got k={num_engines}, N={pages}"
            )

    @property
    def params(self):
        return {"pages": self.pages}

    @property
    def relabeling_groups(self):
        return [tuple(range(self.pages)), (self.pages,)]

    def _evaluate(self, Q):
        N = self.pages
        R = Q[..., :N]
        others = R.sum(axis=-1, keepdims=True) - R
        f = np.clip(0.5 * (1.0 - others), 0.0, 1.0 / N)
        positive = R > 0.0
        sole = positive.sum(axis=-1, keepdims=True) == 1
        f = np.where(sole, positive.astype(float), f)
        last = 1.0 - f.sum(axis=-1, keepdims=True)
        return np.concatenate([f, np.maximum(last, 0.0)], axis=-1)


class InducedMarkov(SelectionRule):
    """Rule given by the stationary law of a success/failure Markov user model."""

    name = "induced_markov"
    non_indifferent = None

    def __init__(self, model):
        super().__init__(model.num_engines)
        self.model = model

    @property
    def params(self):
        return {"success": self.model.success.tolist(), "failure": self.model.failure.tolist()}

    def _evaluate(self, Q):
        from .markov import stationary_batch

        return stationary_batch(self.model, Q)


RULES = {
    cls.name: cls
    for cls in (
        Proportional,
        MarkovianBasic,
        Majority,
        WeightedProportional,
        GammaPower,
        TruncatedIndifferent,
        InducedMarkov,
    )
}


def make_rule(name: str, num_engines: int, params: dict | None = None) -> SelectionRule:
    """Build a rule from its JSON name and parameters."""
    params = dict(params or {})
    if name not in RULES:
        raise RuleConfigError(f"unknown rule {name!r}; known: {sorted(RULES)}")
    if name == "weighted_proportional":
        return WeightedProportional(num_engines, params["weights"])
    if name == "truncated_indifferent":
        return TruncatedIndifferent(num_engines, params["pages"])
    if name == "induced_markov":
        from .markov import MarkovUserModel

        model = MarkovUserModel(params["success"], params["failure"])
        if model.num_engines != num_engines:
            raise RuleConfigError("Markov model size does not match engine count")
        return InducedMarkov(model)
    if params:
        raise RuleConfigError(f"rule {name!r} takes no parameters, got {sorted(params)}")
    return RULES[name](num_engines)


# -- property certification --------------------------------------------------


@dataclass
class PropertyReport:
    prop: str
    passed: bool
    strict: bool = False
    checked: int = 0
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "property": self.prop,
            "passed": self.passed,
            "strict": self.strict,
            "checked": self.checked,
            "witness": self.witness,
        }
        out.update(self.details)
        return out


def _grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1)


def _sample_profiles(k, grid_step, samples, seed, max_grid=4096):
    """Grid points (subsampled when ``k`` is large) followed by uniform random points."""
    rng = np.random.default_rng(seed)
    g = _grid(grid_step)
    total = g.size**k
    if total <= max_grid:
        pts = np.array(list(itertools.product(g, repeat=k)))
    else:
        pts = g[rng.integers(0, g.size, size=(max_grid, k))]
    rand = rng.uniform(0.0, 1.0, size=(samples, k))
    return np.vstack([pts, rand])


def check_monotone(rule, k=None, grid_step=1 / 16, samples=200, seed=42, slack=1e-10):
    """Own share non-decreasing in own ``q``, non-increasing in every other ``q``."""
    k = k or rule.num_engines
    Q = _sample_profiles(k, grid_step, samples, seed)
    checked = 0
    base = rule.evaluate_batch(Q)
    for j in range(k):
        up = Q.copy()
        up[:, j] = np.minimum(up[:, j] + grid_step, 1.0)
        moved = up[:, j] > Q[:, j]
        F = rule.evaluate_batch(up)
        delta = F - base
        for i in range(k):
            bad = delta[:, i] < -slack if i == j else delta[:, i] > slack
            bad &= moved
            checked += int(moved.sum())
            if bad.any():
                r = int(np.flatnonzero(bad)[0])
                return PropertyReport(
                    "monotone",
                    False,
                    checked=checked,
                    witness={
                        "q": Q[r].tolist(),
                        "raised": j,
                        "engine": i,
                        "direction": "own" if i == j else "cross",
                        "change": float(delta[r, i]),
                    },
                )
    return PropertyReport("monotone", True, checked=checked)


def check_non_indifferent(rule, k=None, grid_step=1 / 16, seed=42, samples=200):
    k = k or rule.num_engines
    Q = _sample_profiles(k, grid_step, samples, seed)
    F = rule.evaluate_batch(Q)
    support = Q > 0.0
    n_support = support.sum(axis=1)
    below_one = (support & (Q < 1.0)).any(axis=1)
    first = (n_support >= 2) & below_one
    improves = np.zeros_like(support)
    for i in range(k):
        raised = Q.copy()
        raised[:, i] = 1.0
        improves[:, i] = rule.evaluate_batch(raised)[:, i] > F[:, i] + SUM_TOL
    ok_first = (improves & support).any(axis=1) | ~first
    if not ok_first.all():
        r = int(np.flatnonzero(~ok_first)[0])
        return PropertyReport(
            "non_indifferent",
            False,
            checked=int(first.sum()),
            witness={"q": Q[r].tolist(), "clause": "some supporting engine gains by certainty"},
        )
    has_one = (Q >= 1.0).any(axis=1)
    leak = (F * ~support).sum(axis=1) > SUM_TOL
    bad = has_one & leak
    if bad.any():
        r = int(np.flatnonzero(bad)[0])
        return PropertyReport(
            "non_indifferent",
            False,
            checked=int(first.sum() + has_one.sum()),
            witness={"q": Q[r].tolist(), "clause": "zero-satisfaction engine chosen"},
        )
    return PropertyReport("non_indifferent", True, checked=int(first.sum() + has_one.sum()))


def check_convex(
    rule, k=None, grid_step=1 / 16, seed=42, samples=200, tol=1e-8, strict_tol=1e-10, open_rest=False
):
    """Second differences of ``f_i`` along ``q_i`` at interior grid points.

    ``open_rest`` keeps the other engines' values strictly inside (0, 1),
    for rules that are undefined when several of them sit on the boundary.
    """
    k = k or rule.num_engines
    rng = np.random.default_rng(seed)
    g = _grid(grid_step)
    rest_values = g[1:-1] if open_rest else g
    inner = g[1:-1]
    h = grid_step
    rest_grid = (
        list(itertools.product(rest_values, repeat=k - 1)) if rest_values.size ** (k - 1) <= 512 else []
    )
    rest = np.vstack(
        [np.array(rest_grid).reshape(-1, k - 1), rng.uniform(0.0, 1.0, size=(samples, k - 1))]
    )
    worst = np.inf
    witness = None
    checked = 0
    for i in range(k):
        # rows: (rest sample, interior point), evaluated at x-h, x, x+h
        n_rest, n_in = rest.shape[0], inner.size
        x = np.tile(inner, n_rest)
        others = np.repeat(rest, n_in, axis=0)
        stacks = []
        for dx in (-h, 0.0, h):
            Q = np.insert(others, i, x + dx, axis=1)
            stacks.append(rule.evaluate_batch(np.clip(Q, 0.0, 1.0))[:, i])
        d2 = stacks[0] - 2.0 * stacks[1] + stacks[2]
        checked += d2.size
        r = int(np.argmin(d2))
        if d2[r] < worst:
            worst = float(d2[r])
            witness = {"engine": i, "q": np.insert(others[r], i, x[r]).tolist(), "second_diff": worst}
    passed = worst >= -tol
    return PropertyReport(
        "convex",
        passed,
        strict=bool(passed and worst > strict_tol),
        checked=checked,
        witness=None if passed else witness,
        details={"min_second_difference": worst, "open_rest": open_rest},
    )


def check_cross_concave(rule, k=None, epsilon_grid=(1e-2, 1e-3, 1e-4), seed=42, samples=200, q_rest=None):
    """Catching up by ``eps`` gains more share than a leader loses by retreating ``eps``.

    For each sampled ``x < y`` the inequality must hold at the smallest ``eps``
    in ``epsilon_grid``; the largest ``eps`` below which all tested values pass
    is recorded as a proxy for the existential threshold.
    """
    k = k or rule.num_engines
    rng = np.random.default_rng(seed)
    eps_sorted = sorted(epsilon_grid)
    g = np.linspace(0.0, 1.0, 17)
    pairs = [(x, y) for x in g for y in g if x < y]
    pairs += [tuple(sorted(rng.uniform(0.0, 1.0, 2))) for _ in range(samples)]
    if k > 2:
        rest = np.full((len(pairs), k - 2), q_rest) if q_rest is not None else rng.uniform(
            0.0, 1.0, size=(len(pairs), k - 2)
        )
    else:
        rest = np.zeros((len(pairs), 0))
    deltas = []
    for r, (x, y) in enumerate(pairs):
        if not x < y or x + eps_sorted[0] > 1.0 or y - eps_sorted[0] < 0.0:
            continue
        delta = 0.0
        for eps in eps_sorted:
            if x + eps > 1.0 or y - eps < 0.0:
                break
            Q = np.array([[x + eps, y], [x, y], [y, x], [y - eps, x]])
            Q = np.hstack([Q, np.tile(rest[r], (4, 1))])
            f = rule.evaluate_batch(Q)[:, 0]
            if f[0] - f[1] > f[2] - f[3]:
                delta = eps
            else:
                break
        if delta == 0.0:
            return PropertyReport(
                "cross_concave",
                False,
                checked=len(deltas) + 1,
                witness={"x": float(x), "y": float(y), "rest": rest[r].tolist(), "eps": eps_sorted[0]},
            )
        deltas.append(delta)
    return PropertyReport(
        "cross_concave",
        True,
        strict=True,
        checked=len(deltas),
        details={"smallest_delta_proxy": float(min(deltas)) if deltas else None},
    )
