import numpy as np
import pytest

from searchgame import markov
from searchgame.markov import MarkovUserModel, ReducibleChainError

SWAP = [[0.0, 1.0], [1.0, 0.0]]
EYE2 = [[1.0, 0.0], [0.0, 1.0]]


def test_stationary_examples():
    m = MarkovUserModel(EYE2, SWAP)
    np.testing.assert_allclose(markov.stationary(m, [0.3, 0.3]), [0.5, 0.5])
    np.testing.assert_allclose(markov.stationary(m, [0.5, 0.0]), [2 / 3, 1 / 3])
    np.testing.assert_allclose(markov.closed_form_stationary(m, [0.5, 0.0]), [2 / 3, 1 / 3])
    m3 = markov.switch_on_failure_model(3)
    np.testing.assert_allclose(markov.stationary(m3, [0, 0, 0]), [1 / 3] * 3)


def test_power_iteration_cross_check():
    rng = np.random.default_rng(1)
    m = markov.random_model(4, rng)
    q = rng.uniform(size=4)
    np.testing.assert_allclose(markov.stationary(m, q, validate=True), markov.stationary_power(m, q), atol=1e-12)


def test_return_time_examples():
    m = MarkovUserModel(EYE2, SWAP)
    assert markov.return_times(m, [0.3, 0.0], 0).r_failure == pytest.approx(1.0)
    assert markov.return_times(m, [0.3, 0.5], 0).r_failure == pytest.approx(2.0)
    assert markov.return_times(m, [0.3, 0.5], 0).r_success is None


def test_three_engine_switch_return_times():
    # move to another engine: the walk hits i with probability 1/2 per step
    other = markov.switch_on_failure_model(3)
    for i in range(3):
        assert markov.return_times(other, [0, 0, 0], i).r_failure == pytest.approx(2.0)
    # move uniformly over all three engines (self included): first passage 3
    uniform = MarkovUserModel(np.eye(3), np.full((3, 3), 1 / 3))
    for i in range(3):
        assert markov.return_times(uniform, [0, 0, 0], i).r_failure == pytest.approx(3.0)


def test_return_times_ignore_own_q():
    rng = np.random.default_rng(5)
    m = markov.random_model(4, rng)
    q = rng.uniform(0.2, 0.8, 4)
    base = markov.return_times(m, q, 1)
    for d in (-0.1, 0.1):
        q2 = q.copy()
        q2[1] += d
        rt = markov.return_times(m, q2, 1)
        assert rt.r_success == pytest.approx(base.r_success, abs=1e-10)
        assert rt.r_failure == pytest.approx(base.r_failure, abs=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_closed_form_agrees_with_linear_solve(k):
    rng = np.random.default_rng(k)
    for _ in range(20):
        m = markov.random_model(k, rng)
        q = rng.uniform(size=k)
        np.testing.assert_allclose(
            markov.closed_form_stationary(m, q), markov.stationary(m, q), atol=1e-10
        )


def test_stationary_batch_matches_single():
    rng = np.random.default_rng(2)
    m = markov.random_model(3, rng)
    Q = rng.uniform(size=(7, 3))
    Q[0] = [1.0, 1.0, 0.0]
    batch = markov.stationary_batch(m, Q)
    for row, q in zip(batch, Q):
        np.testing.assert_allclose(row, markov.stationary(m, q), atol=1e-12)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(9)
    m = markov.random_model(3, rng)
    q = rng.uniform(0.2, 0.8, 3)
    h = 1e-3
    for i in range(3):
        share = lambda x: markov.stationary(m, np.where(np.arange(3) == i, x, q))[i]
        d1, d2 = markov.stationary_derivatives(m, q, i)
        s = [share(q[i] + j * h) for j in (-2, -1, 0, 1, 2)]
        fd1 = (s[0] - 8 * s[1] + 8 * s[3] - s[4]) / (12 * h)
        fd2 = (-s[0] + 16 * s[1] - 30 * s[2] + 16 * s[3] - s[4]) / (12 * h**2)
        assert d1 == pytest.approx(fd1, rel=1e-6, abs=1e-9)
        assert d2 == pytest.approx(fd2, rel=1e-6, abs=1e-9)


def test_derivative_signs():
    m = MarkovUserModel(EYE2, SWAP)
    d1, d2 = markov.stationary_derivatives(m, [0.4, 0.3], 0)
    assert d1 > 0 and d2 > 0
    same = MarkovUserModel(SWAP, SWAP)
    assert markov.stationary_derivatives(same, [0.4, 0.3], 0) == (0.0, 0.0)


def test_monotone_check():
    assert markov.check_markov_monotone(MarkovUserModel(EYE2, SWAP)).strict
    rep = markov.check_markov_monotone(MarkovUserModel(SWAP, SWAP))
    assert rep.passed and not rep.strict
    assert not markov.check_markov_monotone(MarkovUserModel(SWAP, EYE2)).passed


def test_reducible_chain_rejected():
    with pytest.raises(ReducibleChainError):
        MarkovUserModel(EYE2, EYE2)
    with pytest.raises(ValueError):
        MarkovUserModel([[0.5, 0.4], [0.5, 0.5]], SWAP)
