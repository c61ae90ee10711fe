import itertools

import numpy as np
import pytest
from scipy.optimize import brentq

from searchgame import scenarios
from searchgame.equilibrium import (
    NonConvergenceError,
    NotApplicableError,
    SizeLimitError,
    WrongGameError,
    best_response_deterministic,
    best_response_dynamics,
    best_response_singleton,
    brute_force_equilibria,
    continuous_best_response,
    deterministic_equilibria,
    find_improving_deviation,
    project_simplex,
    simplex_grid,
    symmetric_equilibrium_beta1_proportional,
    symmetric_equilibrium_proportional,
    verify_epsilon_nash,
)
from searchgame.game import (
    Game,
    GameConfig,
    PrefixChainStrategy,
    SingletonStrategy,
    TypeDistribution,
    UserType,
    perturb_general_position,
)
from searchgame.rules import MarkovianBasic, Proportional, make_rule


def singleton_game(p, beta, k, rule="proportional"):
    p = np.asarray(p, dtype=float)
    return Game(GameConfig(beta, k, p.size), TypeDistribution.singleton(p), make_rule(rule, k))


def loop_payoff(rule, p, beta, W, i):
    """Payoff of engine i by a plain loop over pages."""
    total = 0.0
    for n in range(len(p)):
        q = W[:, n]
        total += p[n] * rule.evaluate(q)[i] * (beta + (1 - beta) * q[i])
    return total


def test_project_simplex():
    V = np.array([[0.2, 0.3, 0.5], [2.0, 0.0, 0.0], [-1.0, 0.5, 0.6]])
    P = project_simplex(V)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(P[0], V[0])
    np.testing.assert_allclose(P[1], [1, 0, 0])
    np.testing.assert_allclose(P[2], [0, 0.45, 0.55])


# -- best responses -------------------------------------------------------------


def test_br_beta1_proportional_gamma_is_best():
    p = np.array([0.5, 0.3, 0.2])
    game = singleton_game(p, 1.0, 2)
    opp = SingletonStrategy(tuple(p))
    _, v = best_response_singleton(game, [opp])
    own = game.payoffs(np.array([p, p]))[0]
    assert v == pytest.approx(own, abs=1e-8)


def test_br_tight_instance_equal_payoffs():
    inst, _ = scenarios.generate("tight_poa", k=2, beta=0.0)
    game = inst.game()
    page1 = SingletonStrategy.vertex(2, 0)
    _, v = best_response_singleton(game, [page1])
    assert v == pytest.approx(1 / 3, abs=1e-12)
    det = [loop_payoff(game.rule, [2 / 3, 1 / 3], 0.0, np.array([[1, 0], [1, 0]]), 0),
           loop_payoff(game.rule, [2 / 3, 1 / 3], 0.0, np.array([[0, 1], [1, 0]]), 0)]
    assert det == pytest.approx([1 / 3, 1 / 3])


def test_br_vertex_comparison():
    game = singleton_game([0.9, 0.1], 0.0, 2)
    s, v = best_response_singleton(game, [SingletonStrategy.vertex(2, 0)])
    assert s.probs[0] == pytest.approx(1.0)
    assert v == pytest.approx(0.45)


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.8])
def test_continuous_br_matches_line_oracle(beta):
    # two pages: the own strategy is one number, so a fine grid is an exact oracle
    p = np.array([0.62, 0.38])
    game = singleton_game(p, beta, 2)
    opp = np.array([0.3, 0.7])
    W = np.array([[0.5, 0.5], opp])
    xs = np.linspace(0.0, 1.0, 20001)
    vals = [loop_payoff(game.rule, p, beta, np.array([[x, 1 - x], opp]), 0) for x in xs]
    _, v = continuous_best_response(game, W, 0)
    assert v == pytest.approx(max(vals), abs=1e-7)
    assert v >= max(vals) - 1e-12


def test_br_singleton_rejects_general_game():
    types = (UserType(frozenset([0]), 2), UserType(frozenset([1]), 1))
    game = Game(GameConfig(0.5, 2, 2, 2), TypeDistribution(types, (0.5, 0.5), 2), Proportional(2))
    with pytest.raises(WrongGameError):
        best_response_singleton(game, [SingletonStrategy((0.5, 0.5))])


def test_br_deterministic_two_slots():
    p = (0.4, 0.35, 0.25)
    thresholds = (2, 2, 1)
    types = tuple(UserType(frozenset([n]), t) for n, t in zip(range(3), thresholds))
    game = Game(GameConfig(0.0, 2, 3, 2), TypeDistribution(types, p, 3), Proportional(2))
    opp = PrefixChainStrategy.deterministic((0, 1))  # covers pages 0 and 1
    W = game.weight_matrix([opp, opp])
    chain, v = best_response_deterministic(game, W, 0)
    values = {}
    for c in itertools.permutations(range(3), 2):
        total = 0.0
        for n in range(3):
            mine = n in c[: thresholds[n]]
            theirs = n in (0, 1)[: thresholds[n]]
            if mine:
                total += p[n] * (0.5 if theirs else 1.0)
        values[c] = total
    assert v == pytest.approx(max(values.values()))
    assert chain == (2, 0)


def test_br_deterministic_symmetric_share():
    p = (0.5, 0.5)
    types = tuple(UserType(frozenset([n]), 2) for n in range(2))
    game = Game(GameConfig(0.2, 2, 2, 2), TypeDistribution(types, p, 2), Proportional(2))
    s = PrefixChainStrategy.deterministic((0, 1))
    pay = game.payoffs(game.weight_matrix([s, s]))
    np.testing.assert_allclose(pay, [0.5, 0.5])


# -- verification ----------------------------------------------------------------


def test_verify_beta1_gamma_profile():
    rng = np.random.default_rng(11)
    p, _ = perturb_general_position(rng.dirichlet(np.ones(5)), 1e-6)
    game = singleton_game(p, 1.0, 3)
    rep = verify_epsilon_nash(game, np.array([p] * 3), 1e-6)
    assert rep.is_equilibrium
    assert min(rep.regrets) >= 0.0


def test_verify_tight_profile():
    inst, claims = scenarios.generate("tight_poa", k=3, beta=0.5)
    rep = verify_epsilon_nash(inst.game(), np.array(claims["equilibrium"]), 1e-9)
    assert rep.is_equilibrium and rep.witnesses == [None] * 3


def test_verify_nonexistence_witness():
    inst, _ = scenarios.generate("nonexistence")
    game = inst.game()
    p = game.gamma.page_probs()
    W = np.array([[1.0, 0.0]] * 3)
    rep = verify_epsilon_nash(game, W, 1e-9)
    assert not rep.is_equilibrium
    w = rep.witnesses[0]
    assert w["payoff"] == pytest.approx(p[1], abs=1e-9)
    assert p[1] > p[0] / 3


def test_verify_is_seed_stable():
    inst, claims = scenarios.generate("general_position_fail", k=3)
    W = np.array(claims["equilibrium"])
    a = verify_epsilon_nash(inst.game(), W, 1e-9, seed=1)
    b = verify_epsilon_nash(inst.game(), W, 1e-9, seed=2)
    assert a.is_equilibrium == b.is_equilibrium


# -- closed forms -----------------------------------------------------------------


def test_beta1_closed_form():
    s = symmetric_equilibrium_beta1_proportional([0.5, 0.3, 0.2])
    assert s.probs == (0.5, 0.3, 0.2)
    s = symmetric_equilibrium_beta1_proportional(np.full(4, 0.25))
    assert s.probs == (0.25,) * 4


def lam_oracle(p, beta, k):
    p = np.asarray(p)
    z = (2 * k - 1) * (1 - beta) / ((k - 1) * beta)
    lo = z * p.max()
    return brentq(lambda lam: np.sum(p / (lam - z * p)) - 1.0, lo + 1e-15, lo + 10.0, xtol=1e-15, rtol=1e-15)


def test_intermediate_closed_form_examples():
    state, cert = symmetric_equilibrium_proportional([0.5, 0.5], 0.9, 2)
    np.testing.assert_allclose(state.page_probs.probs, [0.5, 0.5])
    state, cert = symmetric_equilibrium_proportional([0.6, 0.4], 0.9, 2)
    assert state.lambda_prime == pytest.approx(lam_oracle([0.6, 0.4], 0.9, 2), abs=1e-10)
    assert state.lambda_prime == pytest.approx(1.174, abs=5e-4)
    np.testing.assert_allclose(state.page_probs.probs, [0.616, 0.384], atol=5e-4)
    assert cert.all_negative and cert.global_concavity
    game = singleton_game([0.6, 0.4], 0.9, 2)
    assert verify_epsilon_nash(game, np.array([state.page_probs.probs] * 2), 1e-6).is_equilibrium


def test_intermediate_recovers_beta1():
    state, _ = symmetric_equilibrium_proportional([0.5, 0.3, 0.2], 1.0, 3)
    assert state.z == 0.0
    np.testing.assert_allclose(state.page_probs.probs, [0.5, 0.3, 0.2], atol=1e-12)


def test_beta_to_one_limit():
    p = np.array([0.45, 0.35, 0.2])
    gaps = []
    for beta in (0.9, 0.99, 0.999):
        state, _ = symmetric_equilibrium_proportional(p, beta, 3)
        gaps.append(np.abs(np.array(state.page_probs.probs) - p).max())
    assert gaps[0] > gaps[1] > gaps[2]


def test_intermediate_beta0_not_applicable():
    with pytest.raises(NotApplicableError):
        symmetric_equilibrium_proportional([0.5, 0.5], 0.0, 2)


# -- enumeration ------------------------------------------------------------------


def test_simplex_grid():
    G = simplex_grid(3, 4)
    assert G.shape == (15, 3)
    np.testing.assert_allclose(G.sum(axis=1), 1.0)
    assert len({tuple(r) for r in G}) == 15


def test_brute_force_examples():
    inst, _ = scenarios.generate("nonexistence")
    assert brute_force_equilibria(inst.game(), grid_m=1, epsilon=1e-9) == []
    inst, _ = scenarios.generate("tight_poa", k=2, beta=0.0)
    found = [W for W, r in brute_force_equilibria(inst.game(), 12, 1e-9) if r.is_equilibrium]
    assert any(np.array_equal(W, [[1, 0], [1, 0]]) for W in found)
    game = singleton_game([0.6, 0.4], 1.0, 2)
    found = brute_force_equilibria(game, 12, 1e-6, refine=False)
    near = np.array([7 / 12, 5 / 12])
    assert any(np.allclose(W, [near, near]) for W, _ in found)


def test_brute_force_size_guard():
    game = singleton_game(np.full(4, 0.25), 0.5, 3)
    with pytest.raises(SizeLimitError):
        brute_force_equilibria(game, 20)


@pytest.mark.parametrize("m", [8, 12])
def test_deterministic_property_beta0(m):
    # beta = 0 with a non-indifferent rule: grid equilibria sit at deterministic strategies
    rng = np.random.default_rng(m)
    for _ in range(3):
        p, _ = perturb_general_position(rng.dirichlet(np.ones(3)), 1e-6, int(rng.integers(1000)))
        game = singleton_game(p, 0.0, 2, "markovian")
        found = brute_force_equilibria(game, m, 1e-9, refine=False)
        assert found
        for W, _ in found:
            assert np.all(W.max(axis=1) >= 1 - 1 / m - 1e-12)


def test_symmetry_property_beta1():
    rng = np.random.default_rng(4)
    p, _ = perturb_general_position(np.array([0.4, 0.35, 0.25]), 1e-6)
    game = singleton_game(p, 1.0, 2)
    for _ in range(100):
        W = rng.dirichlet(np.ones(3), size=2)
        assert find_improving_deviation(game, W) is not None
    for W, _ in brute_force_equilibria(game, 12, 1e-6, refine=False):
        assert np.abs(W[0] - W[1]).max() <= 1 / 12 + 1e-12


def test_no_deviation_at_equilibria():
    p = np.array([0.5, 0.3, 0.2])
    game = singleton_game(p, 1.0, 2)
    assert find_improving_deviation(game, np.array([p, p])) is None
    inst, claims = scenarios.generate("non_indifference", pages=6)
    assert find_improving_deviation(inst.game(), np.array(claims["equilibrium"])) is None


def test_deterministic_equilibria_tight():
    inst, _ = scenarios.generate("tight_poa", k=2, beta=0.0)
    found = deterministic_equilibria(inst.game())
    assert sorted(tuple(W.argmax(axis=1)) for W, _ in found) == [(0, 0), (0, 1), (1, 0)]


def test_best_response_dynamics():
    game = singleton_game([0.7, 0.3], 0.0, 2, "markovian")
    W, rounds = best_response_dynamics(game, seed=3)
    assert verify_epsilon_nash(game, W, 1e-6).is_equilibrium
    with pytest.raises(NonConvergenceError):
        best_response_dynamics(game, max_rounds=0)
