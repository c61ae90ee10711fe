import math

import numpy as np
import pytest

from searchgame import scenarios
from searchgame.game import is_general_position
from searchgame.instance import Instance, canonical_dumps
from searchgame.scenarios import CATALOG, ScenarioRangeError, generate


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_every_scenario_roundtrips(name):
    inst, claims = generate(name)
    text = inst.dumps()
    again = Instance.from_json(__import__("json").loads(text))
    assert again.dumps() == text
    assert again.gamma.probs == inst.gamma.probs
    canonical_dumps(claims)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_generators_are_deterministic(name):
    assert generate(name)[0].dumps() == generate(name)[0].dumps()


def test_tight_poa_example():
    inst, claims = generate("tight_poa", k=2, beta=0.0)
    np.testing.assert_allclose(inst.gamma.probs, [2 / 3, 1 / 3])
    assert claims["poa"] == pytest.approx(1.5)


def test_pos_sqrt_example():
    inst, claims = generate("pos_sqrt", pages=400)
    p = inst.gamma.page_probs()
    assert p[:2] == pytest.approx([0.05, 0.05], abs=2e-6)
    assert p[2:] == pytest.approx(np.full(398, 0.9 / 398), abs=2e-6)
    assert claims["pos"] == pytest.approx((p[0] + p[1]) / np.sum(p**2))


def test_general_position_fail_example():
    inst, claims = generate("general_position_fail", k=5)
    np.testing.assert_allclose(inst.gamma.probs, [0.2] * 5)
    assert inst.rule.weights.tolist() == [25, 1, 1, 1, 1]
    assert claims["equilibrium_welfare"] == pytest.approx(0.4)


@pytest.mark.parametrize("name", ["pos_linear", "pos_sqrt", "nonexistence", "intermediate_sqrt"])
def test_perturbed_scenarios_in_general_position(name):
    inst, _ = generate(name)
    assert is_general_position(inst.gamma).status in ("general", "unchecked")


def test_non_indifference_range():
    inst, _ = generate("non_indifference", pages=6)
    p = np.array(inst.gamma.probs)
    assert np.all((p >= 2 / 18) & (p <= 4 / 18))
    assert is_general_position(p)


def test_intermediate_sqrt_tail_bounds():
    for N in (64, 100, 256, 400):
        inst, _ = generate("intermediate_sqrt", pages=N, beta=0.75)
        p = inst.gamma.page_probs()
        assert np.all(p[2:] >= 1 / (N - 2) - 4 / N**1.5)
        assert np.all(p[2:] <= 2 / N)


@pytest.mark.parametrize(
    "name, params",
    [
        ("intermediate_uniform", {"k": 3, "pages": 20, "beta": 0.2}),
        ("intermediate_sqrt", {"pages": 100, "beta": 0.5}),
        ("nonexistence", {"gamma": [0.7, 0.3]}),
        ("general_position_fail", {"k": 2}),
        ("pos_linear", {"k": 8, "pages": 8}),
    ],
)
def test_range_errors(name, params):
    with pytest.raises(ScenarioRangeError):
        generate(name, **params)


def test_unknown_inputs():
    with pytest.raises(ValueError):
        generate("nope")
    with pytest.raises(ValueError):
        generate("tight_poa", pages=3)


def test_random_instance_covers_pages():
    inst = scenarios.random_instance(3, 5, 2, 8, 0.3, "majority", 7)
    assert inst.gamma.num_pages == 5
    assert inst.config.max_threshold == 2
    assert math.isclose(sum(inst.gamma.probs), 1.0, abs_tol=1e-12)
