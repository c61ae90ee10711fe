import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searchgame.game import (
    Game,
    GameConfig,
    InvalidGameError,
    PrefixChainStrategy,
    SingletonStrategy,
    TypeDistribution,
    UserType,
    engine_payoffs,
    is_general_position,
    perturb_general_position,
    profile_satisfaction,
    satisfaction_probability,
    welfare,
)
from searchgame.rules import MarkovianBasic, Proportional, make_rule
from searchgame.scenarios import random_instance

A, B, C, D = 0, 1, 2, 3


def test_satisfaction_deterministic_and_mixed():
    t = UserType(frozenset([A]), 1)
    assert satisfaction_probability(PrefixChainStrategy.deterministic((A,)), t) == 1.0
    mix = PrefixChainStrategy((((A,), 0.5), ((B,), 0.5)))
    assert satisfaction_probability(mix, t) == 0.5


def test_satisfaction_two_slot_chains():
    s = PrefixChainStrategy((((A, B), 0.3), ((C, D), 0.7)))
    assert satisfaction_probability(s, UserType(frozenset([B]), 2)) == pytest.approx(0.3)
    assert satisfaction_probability(s, UserType(frozenset([B]), 1)) == 0.0


def test_profile_satisfaction():
    t = UserType(frozenset([A]), 1)
    a = PrefixChainStrategy.deterministic((A,))
    b = PrefixChainStrategy.deterministic((B,))
    assert list(profile_satisfaction([a, a], t)) == [1.0, 1.0]
    assert list(profile_satisfaction([a, b], t)) == [1.0, 0.0]
    s = PrefixChainStrategy((((A, B), 0.3), ((C, D), 0.7)))
    other = PrefixChainStrategy.deterministic((B, C))
    q = profile_satisfaction([s, other], UserType(frozenset([B]), 2))
    np.testing.assert_allclose(q, [0.3, 1.0])


def _tight_k2(beta, rule=None):
    gamma = TypeDistribution.singleton([2 / 3, 1 / 3])
    return GameConfig(beta, 2, 2), gamma, rule or Proportional(2)


def test_payoffs_hand_values():
    config, gamma, rule = _tight_k2(0.0)
    page1 = SingletonStrategy.vertex(2, 0)
    np.testing.assert_allclose(engine_payoffs([page1, page1], rule, config, gamma), [1 / 3, 1 / 3])
    config, gamma, rule = _tight_k2(1.0)
    np.testing.assert_allclose(engine_payoffs([page1, page1], rule, config, gamma), [0.5, 0.5])


def test_welfare_hand_values():
    config, gamma, rule = _tight_k2(0.0)
    p1, p2 = SingletonStrategy.vertex(2, 0), SingletonStrategy.vertex(2, 1)
    assert welfare([p1, p1], rule, config, gamma) == pytest.approx(2 / 3)
    assert welfare([p2, p2], rule, config, gamma) == pytest.approx(1 / 3)
    uniform = TypeDistribution.singleton([0.5, 0.5])
    assert welfare([p1, p2], MarkovianBasic(2), config, uniform) == pytest.approx(1.0)


def test_symmetric_profile_equal_payoffs():
    config, gamma, rule = _tight_k2(0.4)
    s = SingletonStrategy((0.3, 0.7))
    pay = engine_payoffs([s, s], rule, config, gamma)
    assert pay[0] == pytest.approx(pay[1], abs=1e-15)


def test_type_distribution_validation():
    with pytest.raises(InvalidGameError):
        TypeDistribution.singleton([0.5, 0.4])
    with pytest.raises(InvalidGameError):
        TypeDistribution((UserType(frozenset([0])),), (1.0,), 2)  # page 1 uncovered
    with pytest.raises(InvalidGameError):
        TypeDistribution((UserType(frozenset([0])), UserType(frozenset([0]))), (0.5, 0.5), 1)
    d = TypeDistribution.singleton([1.0, 1.0], normalize=True)
    assert d.probs == (0.5, 0.5)


def test_strategy_validation():
    with pytest.raises(InvalidGameError):
        SingletonStrategy((0.6, 0.5))
    with pytest.raises(InvalidGameError):
        PrefixChainStrategy((((A, A), 1.0),))
    with pytest.raises(InvalidGameError):
        PrefixChainStrategy((((A,), 0.5), ((A, B), 0.5)))


def test_general_position():
    assert not is_general_position([0.5, 0.3, 0.2])
    assert is_general_position([0.6, 0.4])
    q, check = perturb_general_position([0.5, 0.3, 0.2], 1e-6)
    assert check and is_general_position(q)
    assert abs(q.sum() - 1.0) < 1e-12
    assert is_general_position(np.full(21, 1 / 21)).status == "unchecked"


def _random_game(seed, threshold=2):
    rng = np.random.default_rng(seed)
    rule = ["proportional", "markovian", "majority"][seed % 3]
    k = int(rng.integers(2, 4))
    inst = random_instance(k, 4, threshold, 6, float(rng.uniform()), rule, rng)
    return inst.game(), rng


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_payoff_welfare_identity(seed):
    game, rng = _random_game(seed)
    W = rng.dirichlet(np.ones(game.n_atoms), size=game.k)
    total = game.payoffs(W).sum()
    assert total == pytest.approx(game.beta + (1 - game.beta) * game.welfare(W), abs=1e-10)
    assert 0.0 <= game.welfare(W) <= 1.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_satisfaction_affine_in_weights(seed):
    game, rng = _random_game(seed)
    W1 = rng.dirichlet(np.ones(game.n_atoms), size=game.k)
    W2 = rng.dirichlet(np.ones(game.n_atoms), size=game.k)
    mid = game.satisfaction(0.5 * (W1 + W2))
    np.testing.assert_allclose(mid, 0.5 * (game.satisfaction(W1) + game.satisfaction(W2)), atol=1e-12)


def test_game_rejects_mismatched_rule():
    config, gamma, _ = _tight_k2(0.0)
    with pytest.raises(InvalidGameError):
        Game(config, gamma, make_rule("proportional", 3))
