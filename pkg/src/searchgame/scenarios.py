"""Named instance families with machine-checkable expected claims.

``generate(name, **params)`` returns ``(instance, claims)``.  Claims hold
the profile the family is built around (as weight rows), welfare values
and PoA/PoS targets.  Every generator is deterministic given its params.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .game import GameConfig, TypeDistribution, UserType, perturb_general_position
from .instance import Instance, singleton_instance
from .rules import (
    GammaPower,
    TruncatedIndifferent,
    WeightedProportional,
    make_rule,
)

DEFAULT_SEED = 42


class ScenarioRangeError(ValueError):
    """Parameters outside the range where the family has its stated behaviour."""


@dataclass
class ScenarioSpec:
    name: str
    description: str
    defaults: dict
    condition: str = ""
    builder: object = field(default=None, repr=False)


def _check(cond: bool, message: str):
    if not cond:
        raise ScenarioRangeError(message)


def _perturbed(p, scale, seed):
    if scale <= 0.0:
        return np.asarray(p, dtype=float)
    q, check = perturb_general_position(np.asarray(p, dtype=float), scale, seed)
    return q


def _rows(vectors):
    return [list(map(float, v)) for v in vectors]


# -- families ------------------------------------------------------------------


def _tight_poa(k=2, beta=0.0, rule="markovian"):
    _check(k >= 2, "tight_poa needs k >= 2")
    _check(0.0 <= beta <= 1.0, "tight_poa needs beta in [0, 1]")
    d = 2 * k - 1 - beta
    p = np.full(k, 1.0 / d)
    p[0] = (k - beta) / d
    inst = singleton_instance(p, beta, k, make_rule(rule, k))
    eq = np.zeros((k, k))
    eq[:, 0] = 1.0
    claims = {
        "equilibrium": _rows(eq),
        "equilibrium_welfare": (k - beta) / d,
        "opt_welfare": 1.0,
        "poa": d / (k - beta),
    }
    return inst, claims


def _pos_linear(k=8, pages=64, perturbation=1e-6, seed=DEFAULT_SEED):
    _check(k >= 2, "pos_linear needs k >= 2")
    _check(pages > k, "pos_linear needs more pages than engines (N > k)")
    head = 1.0 / (k + 1)
    p = np.full(pages, head / (pages - k))
    p[:k] = head
    p = _perturbed(p, perturbation, seed)
    return _beta1_claims(p, k, pos_at_least=0.8 * k)


def _pos_sqrt(pages=400, perturbation=1e-6, seed=DEFAULT_SEED):
    k = 2
    _check(pages >= 5, "pos_sqrt needs N >= 5")
    head = 1.0 / math.sqrt(pages)
    p = np.full(pages, (1.0 - 2 * head) / (pages - 2))
    p[:2] = head
    p = _perturbed(p, perturbation, seed)
    return _beta1_claims(p, k)


def _beta1_claims(p, k, **extra):
    inst = singleton_instance(p, 1.0, k, make_rule("proportional", k))
    opt = float(np.sort(p)[::-1][:k].sum())
    eq_welfare = float(np.sum(p * p))
    claims = {
        "equilibrium": _rows([p] * k),
        "equilibrium_welfare": eq_welfare,
        "opt_welfare": opt,
        "pos": opt / eq_welfare,
    }
    claims.update(extra)
    return inst, claims


def _intermediate_uniform(k=3, pages=20, beta=0.5, seed=DEFAULT_SEED):
    _check(k >= 2 and pages > k, "intermediate_uniform needs 2 <= k < N")
    bound = 2 * k / (pages + 2 * k)
    _check(beta > bound, f"intermediate_uniform needs beta > 2k/(N+2k) = {bound:.6g}")
    _check(beta < 1.0, "intermediate_uniform needs beta < 1")
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-0.5, 0.5, pages) / pages**2
    noise -= noise.mean()
    p = 1.0 / pages + noise
    _check(
        bool(np.all(np.abs(p - 1.0 / pages) <= 1.0 / pages**2)),
        "generated distribution left the 1/N +- 1/N^2 band",
    )
    inst = singleton_instance(p, beta, k, make_rule("proportional", k))
    claims = {"opt_welfare": float(np.sort(p)[::-1][:k].sum()), "poa_order": k}
    return inst, claims


def _intermediate_sqrt(pages=100, beta=0.6, seed=DEFAULT_SEED):
    k = 2
    _check(pages >= 64, "intermediate_sqrt needs N >= 64")
    root = math.sqrt(pages)
    _check(beta >= 6.0 / root, f"intermediate_sqrt needs beta >= 6/sqrt(N) = {6.0 / root:.6g}")
    _check(beta < 1.0, "intermediate_sqrt needs beta < 1")
    head = 1.0 / root
    p = np.full(pages, (1.0 - 2 * head) / (pages - 2))
    p[:2] = head
    p = _perturbed(p, 1e-6, seed)
    lo, hi = 1.0 / (pages - 2) - 4.0 / pages**1.5, 2.0 / pages
    _check(bool(np.all((p[2:] >= lo) & (p[2:] <= hi))), "tail probabilities outside their bounds")
    _check(bool(np.all((p[:2] >= head - 1e-5) & (p[:2] <= 2 * head))), "head out of range")
    inst = singleton_instance(p, beta, k, make_rule("proportional", k))
    claims = {
        "opt_welfare": float(p[0] + p[1]),
        "head_strategy_at_most": 4.0 / root,
        "poa_order": root,
    }
    return inst, claims


def _nonexistence(gamma=(0.55, 0.45), perturbation=1e-6, seed=DEFAULT_SEED):
    p = np.asarray(gamma, dtype=float)
    _check(p.size == 2 and abs(p.sum() - 1.0) < 1e-12, "nonexistence needs two pages summing to 1")
    _check(bool(np.all((p > 1 / 3) & (p < 2 / 3))), "nonexistence needs both Gamma(n) in (1/3, 2/3)")
    p = _perturbed(p, perturbation, seed)
    inst = Instance(GameConfig(0.0, 3, 2), TypeDistribution.singleton(p), GammaPower(3))
    # all three on page n: each gets p[n]/3, a deviation to n' gets p[n']
    # two on n, one on n': the 1/5 holder gains (4/5) p[n'] by moving
    claims = {
        "pure_equilibria": 0,
        "witness_all_same": [[float(p[n] / 3), float(p[1 - n])] for n in range(2)],
        "witness_two_one": [[float(p[n] / 5), float(0.8 * p[1 - n])] for n in range(2)],
    }
    return inst, claims


def non_indifference_profile(p):
    X = 1.0 / np.sum(1.0 / p)
    return (p - X) / (p * (p.size - 1))


def _non_indifference(pages=6, seed=DEFAULT_SEED):
    _check(pages >= 2, "non_indifference needs N >= 2")
    N = pages
    rng = np.random.default_rng(seed)
    p = 1.0 / N + rng.uniform(-0.25, 0.25, N) / N
    p = p / p.sum()
    _check(
        bool(np.all((p >= 2 / (3 * N)) & (p <= 4 / (3 * N)))),
        "Gamma(n) must lie in [2/(3N), 4/(3N)]",
    )
    inst = singleton_instance(p, 0.0, N + 1, TruncatedIndifferent(N + 1, N))
    rho = non_indifference_profile(p)
    last = np.zeros(N)
    last[int(np.argmax(p))] = 1.0
    claims = {
        "equilibrium": _rows([rho] * N + [last]),
        "zero_regret_engines": list(range(N)),
        "welfare_at_most": 4.0 / N,
        "opt_welfare": 1.0,
    }
    return inst, claims


def _general_position_fail(k=3):
    _check(k >= 3, "general_position_fail needs k >= 3")
    p = np.full(k, 1.0 / k)
    weights = np.ones(k)
    weights[0] = k * k
    inst = singleton_instance(p, 0.0, k, WeightedProportional(k, weights))
    first = np.zeros(k)
    first[: k - 1] = 1.0 / (k - 1)
    rest = np.zeros(k)
    rest[-1] = 1.0
    claims = {
        "equilibrium": _rows([first] + [rest] * (k - 1)),
        "equilibrium_welfare": 2.0 / k,
        "opt_welfare": 1.0,
        "poa": k / 2.0,
    }
    return inst, claims


def _uniform(k=2, pages=4, beta=0.5, rule="proportional"):
    p = np.full(pages, 1.0 / pages)
    return singleton_instance(p, beta, k, make_rule(rule, k)), {
        "opt_welfare": min(k, pages) / pages
    }


def _random(k=2, pages=4, threshold=1, types=6, beta=0.5, rule="proportional", seed=DEFAULT_SEED):
    inst = random_instance(k, pages, threshold, types, beta, rule, seed)
    return inst, {}


def random_instance(k, pages, threshold=1, types=6, beta=0.5, rule="proportional", seed=DEFAULT_SEED):
    """Random type distribution covering every page; general threshold and desired sets."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    found = {}
    for n in range(pages):  # one type per page guarantees coverage
        t = UserType(frozenset([n]), int(rng.integers(1, threshold + 1)))
        found[t] = None
    for _ in range(types * 4):
        if len(found) >= max(types, pages):
            break
        size = int(rng.integers(1, min(pages, 3) + 1))
        t = UserType(
            frozenset(int(x) for x in rng.choice(pages, size, replace=False)),
            int(rng.integers(1, threshold + 1)),
        )
        found[t] = None
    tlist = tuple(found)
    probs = rng.dirichlet(np.ones(len(tlist)))
    gamma = TypeDistribution(tlist, tuple(probs), pages, normalize=True)
    return Instance(GameConfig(beta, k, pages, threshold), gamma, make_rule(rule, k))


CATALOG = {
    s.name: s
    for s in [
        ScenarioSpec(
            "tight_poa",
            "k pages, k engines, all engines on the heavy page is an equilibrium at the worst-case PoA",
            {"k": 2, "beta": 0.0, "rule": "markovian"},
            "",
            _tight_poa,
        ),
        ScenarioSpec(
            "pos_linear",
            "beta = 1, proportional; k heavy pages at 1/(k+1), uniform tail; PoS grows like k",
            {"k": 8, "pages": 64, "perturbation": 1e-6, "seed": DEFAULT_SEED},
            "N > k",
            _pos_linear,
        ),
        ScenarioSpec(
            "pos_sqrt",
            "beta = 1, proportional, 2 engines; two heavy pages at 1/sqrt(N); PoS grows like sqrt(N)",
            {"pages": 400, "perturbation": 1e-6, "seed": DEFAULT_SEED},
            "N >= 5",
            _pos_sqrt,
        ),
        ScenarioSpec(
            "intermediate_uniform",
            "proportional, near-uniform pages; symmetric equilibrium with PoA of order k",
            {"k": 3, "pages": 20, "beta": 0.5, "seed": DEFAULT_SEED},
            "beta > 2k/(N+2k)",
            _intermediate_uniform,
        ),
        ScenarioSpec(
            "intermediate_sqrt",
            "proportional, 2 engines, two heavy pages; symmetric equilibrium with PoA of order sqrt(N)",
            {"pages": 100, "beta": 0.6, "seed": DEFAULT_SEED},
            "beta >= 6/sqrt(N), N >= 64",
            _intermediate_sqrt,
        ),
        ScenarioSpec(
            "nonexistence",
            "3 engines, 2 pages, gamma_power rule, beta = 0; no deterministic equilibrium",
            {"gamma": [0.55, 0.45], "perturbation": 1e-6, "seed": DEFAULT_SEED},
            "Gamma(n) in (1/3, 2/3)",
            _nonexistence,
        ),
        ScenarioSpec(
            "non_indifference",
            "N pages, N + 1 engines, truncated indifferent rule; a mixed equilibrium with welfare O(1/N)",
            {"pages": 6, "seed": DEFAULT_SEED},
            "Gamma(n) in [2/(3N), 4/(3N)]",
            _non_indifference,
        ),
        ScenarioSpec(
            "general_position_fail",
            "uniform pages, weighted proportional rule with w_1 = k^2; equilibrium welfare 2/k",
            {"k": 3},
            "k >= 3",
            _general_position_fail,
        ),
        ScenarioSpec(
            "uniform",
            "baseline: uniform singleton distribution",
            {"k": 2, "pages": 4, "beta": 0.5, "rule": "proportional"},
            "",
            _uniform,
        ),
        ScenarioSpec(
            "random",
            "baseline: random types with desired sets and thresholds",
            {
                "k": 2,
                "pages": 4,
                "threshold": 1,
                "types": 6,
                "beta": 0.5,
                "rule": "proportional",
                "seed": DEFAULT_SEED,
            },
            "",
            _random,
        ),
    ]
}


def generate(name: str, **params):
    """Build the named instance; unknown names or parameters raise ``ValueError``."""
    if name not in CATALOG:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(CATALOG)}")
    spec = CATALOG[name]
    unknown = sorted(set(params) - set(spec.defaults))
    if unknown:
        raise ValueError(f"scenario {name!r} does not take {unknown}")
    args = dict(spec.defaults)
    args.update({k: v for k, v in params.items() if v is not None})
    return spec.builder(**args)
