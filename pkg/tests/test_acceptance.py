"""Acceptance criteria, one test each.

Every test prints a ``criterion N: PASS/FAIL`` line (also collected into the
terminal summary by ``conftest.py``) and asserts its runtime budget.
"""

import itertools
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.optimize import brentq

from searchgame import markov, scenarios
from searchgame.equilibrium import (
    brute_force_equilibria,
    symmetric_equilibrium_beta1_proportional,
    symmetric_equilibrium_proportional,
    verify_epsilon_nash,
)
from searchgame.game import Game, GameConfig, TypeDistribution, is_general_position
from searchgame.rules import InducedMarkov, Proportional, check_convex
from searchgame.welfare import (
    check_welfare_structure,
    price_of_anarchy,
    price_of_stability,
    social_optimum,
)

RESULTS = {}


@contextmanager
def criterion(number, limit):
    start = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        ok = ok and elapsed < limit
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f} s, budget {limit} s)"
        RESULTS[number] = line
        print(line)
    assert elapsed < limit, f"criterion {number} took {elapsed:.2f} s"


def singleton_game(p, beta, k):
    return Game(GameConfig(beta, k, len(p)), TypeDistribution.singleton(p), Proportional(k))


def general_position_probs(rng, N):
    while True:
        p = rng.dirichlet(np.ones(N))
        if is_general_position(p):
            return p


def lambda_oracle(p, beta, k):
    z = (2 * k - 1) * (1 - beta) / ((k - 1) * beta)
    lo = z * p.max()
    return brentq(lambda lam: np.sum(p / (lam - z * p)) - 1.0, lo + 1e-15, lo + 10.0, xtol=1e-15, rtol=1e-15)


def test_criterion_1_tight_poa():
    with criterion(1, 1.0):
        for k, beta in itertools.product((2, 3, 4, 5), (0.0, 0.5, 1.0)):
            inst, claims = scenarios.generate("tight_poa", k=k, beta=beta)
            game = inst.game()
            W = np.array(claims["equilibrium"])
            assert verify_epsilon_nash(game, W, 1e-9).is_equilibrium, (k, beta)
            poa = price_of_anarchy(game, [W], social_optimum(game))
            assert poa == pytest.approx((2 * k - 1 - beta) / (k - beta), abs=1e-9)


def test_criterion_2_beta_one_proportional():
    rng = np.random.default_rng(2024)
    with criterion(2, 120.0):
        for _ in range(50):
            k, N = int(rng.integers(2, 4)), int(rng.integers(3, 9))
            p = general_position_probs(rng, N)
            game = singleton_game(p, 1.0, k)
            q = symmetric_equilibrium_beta1_proportional(p)
            np.testing.assert_array_equal(q.probs, p)
            assert verify_epsilon_nash(game, np.array([q.probs] * k), 1e-6).is_equilibrium
        m = 12
        for N in (2, 3, 2, 3, 3):
            p = general_position_probs(rng, N)
            found = brute_force_equilibria(singleton_game(p, 1.0, 2), grid_m=m, refine=False)
            assert found
            for W, _ in found:
                assert np.abs(W - p).max() <= 1.0 / m


def test_criterion_3_pos_scaling():
    with criterion(3, 5.0):
        inst, claims = scenarios.generate("pos_sqrt", pages=400)
        game = inst.game()
        p = game.gamma.page_probs()
        W = np.array([p, p])
        assert game.welfare(W) == pytest.approx(np.sum(p**2), abs=1e-15)
        pos = price_of_stability(game, [W], social_optimum(game))
        assert pos == pytest.approx((p[0] + p[1]) / np.sum(p**2), rel=1e-12)
        assert pos == pytest.approx((2 / 20) / np.sum(p**2), rel=1e-4)
        assert abs(pos - 14.2) <= 0.5

        inst, claims = scenarios.generate("pos_linear", k=8, pages=64)
        game = inst.game()
        W = np.array(claims["equilibrium"])
        pos = price_of_stability(game, [W], social_optimum(game))
        assert pos >= 0.8 * 8


def test_criterion_4_intermediate_beta():
    rng = np.random.default_rng(7)
    with criterion(4, 60.0):
        for _ in range(20):
            k, N = int(rng.integers(2, 5)), int(rng.integers(2, 9))
            beta = float(rng.uniform(0.3, 0.99))
            p = general_position_probs(rng, N)
            state, _ = symmetric_equilibrium_proportional(p, beta, k)
            assert state.lambda_prime == pytest.approx(lambda_oracle(p, beta, k), abs=1e-10)
        for _ in range(5):
            p = general_position_probs(rng, int(rng.integers(2, 7)))
            state, _ = symmetric_equilibrium_proportional(p, 0.9, 2)
            W = np.array([state.page_probs.probs] * 2)
            assert verify_epsilon_nash(singleton_game(p, 0.9, 2), W, 1e-6).is_equilibrium

        inst, claims = scenarios.generate("intermediate_sqrt", pages=100, beta=0.6)
        game = inst.game()
        state, _ = symmetric_equilibrium_proportional(game.gamma.page_probs(), 0.6, 2)
        W = np.array([state.page_probs.probs] * 2)
        assert verify_epsilon_nash(game, W, 1e-6).is_equilibrium
        assert price_of_anarchy(game, [W], social_optimum(game)) >= 3.0


def test_criterion_5_markov():
    rng = np.random.default_rng(11)
    with criterion(5, 60.0):
        for k in (2, 3, 4, 5):
            for _ in range(100):
                model = markov.random_model(k, rng)
                q = rng.uniform(size=k)
                np.testing.assert_allclose(
                    markov.closed_form_stationary(model, q), markov.stationary(model, q), atol=1e-10, rtol=0
                )
            for _ in range(10):
                model = markov.random_model(k, rng)
                q = rng.uniform(0.2, 0.8, k)
                h = 1e-3
                for i in range(k):
                    s = [
                        markov.stationary(model, np.where(np.arange(k) == i, q[i] + j * h, q))[i]
                        for j in (-2, -1, 0, 1, 2)
                    ]
                    fd1 = (s[0] - 8 * s[1] + 8 * s[3] - s[4]) / (12 * h)
                    fd2 = (-s[0] + 16 * s[1] - 30 * s[2] + 16 * s[3] - s[4]) / (12 * h**2)
                    d1, d2 = markov.stationary_derivatives(model, q, i)
                    assert d1 == pytest.approx(fd1, rel=1e-6, abs=1e-9)
                    assert d2 == pytest.approx(fd2, rel=1e-6, abs=1e-9)
        for j in range(50):
            model = markov.random_strictly_monotone_model(2 + j % 4, rng)
            assert markov.check_markov_monotone(model).strict
            report = check_convex(InducedMarkov(model), samples=40, seed=j)
            assert report.passed and report.strict, report.details


def test_criterion_6_nonexistence():
    with criterion(6, 1.0):
        inst, claims = scenarios.generate("nonexistence")
        game = inst.game()
        p = game.gamma.page_probs()
        equilibria = 0
        for combo in itertools.product(range(2), repeat=3):
            W = np.eye(2)[list(combo)]
            if verify_epsilon_nash(game, W, 1e-9, continuous=False).is_equilibrium:
                equilibria += 1
        assert equilibria == claims["pure_equilibria"] == 0

        def dev(combo, i, page):
            moved = list(combo)
            moved[i] = page
            return game.payoffs(np.eye(2)[moved])[i]

        for n in range(2):
            other = 1 - n
            stay = game.payoffs(np.eye(2)[[n, n, n]])
            assert stay == pytest.approx([p[n] / 3] * 3, abs=1e-12)
            assert dev((n, n, n), 0, other) == pytest.approx(p[other], abs=1e-12)
            assert p[n] / 3 < p[other]
            for combo in set(itertools.permutations((n, n, other))):
                pay = game.payoffs(np.eye(2)[list(combo)])
                holder = int(np.argmin(np.where(np.array(combo) == n, pay, np.inf)))
                assert pay[holder] == pytest.approx(p[n] / 5, abs=1e-12)
                assert dev(combo, holder, other) == pytest.approx(0.8 * p[other], abs=1e-12)
                assert p[n] / 5 < 0.8 * p[other]


def test_criterion_7_necessity_counterexamples():
    with criterion(7, 10.0):
        N = 6
        inst, claims = scenarios.generate("non_indifference", pages=N)
        game = inst.game()
        W = np.array(claims["equilibrium"])
        report = verify_epsilon_nash(game, W, 1e-9)
        assert max(report.regrets[:N]) <= 1e-9
        assert game.welfare(W) <= claims["welfare_at_most"] == 4 / N
        assert social_optimum(game).welfare == pytest.approx(1.0)

        for k in (3, 5):
            inst, claims = scenarios.generate("general_position_fail", k=k)
            game = inst.game()
            W = np.array(claims["equilibrium"])
            assert verify_epsilon_nash(game, W, 1e-9).is_equilibrium
            assert game.welfare(W) == pytest.approx(2 / k, abs=1e-9)
            assert price_of_anarchy(game, [W], social_optimum(game)) == pytest.approx(k / 2, abs=1e-9)


def test_criterion_8_structure():
    rng = np.random.default_rng(8)
    with criterion(8, 60.0):
        rules = ["proportional", "markovian", "majority"]
        for j in range(500):
            inst = scenarios.random_instance(
                int(rng.integers(2, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 3)),
                int(rng.integers(1, 7)), float(rng.uniform()), rules[j % 3], seed=rng,
            )
            game = inst.game()
            W = rng.dirichlet(np.ones(game.n_atoms), size=game.k)
            total = game.payoffs(W).sum()
            assert total == pytest.approx(game.beta + (1 - game.beta) * game.welfare(W), abs=1e-10)
        for j in range(100):
            inst = scenarios.random_instance(
                int(rng.integers(2, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 3)),
                int(rng.integers(2, 7)), 0.0, rules[j % 3], seed=rng,
            )
            report = check_welfare_structure(inst.game(), samples=20, seed=j)
            assert report.passed, report.witness
