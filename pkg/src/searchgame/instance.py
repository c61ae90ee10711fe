"""Instance and profile files: JSON schema, validation and canonical output."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .game import (
    Game,
    GameConfig,
    InvalidGameError,
    PrefixChainStrategy,
    SingletonStrategy,
    TypeDistribution,
    UserType,
)
from .rules import RuleConfigError, make_rule


class InstanceError(ValueError):
    """Malformed or inconsistent instance/profile data; ``where`` locates the problem."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where
        self.message = message


def fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x} cannot be serialized")
    s = format(float(x), ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(key))}: {_encode(obj[key], indent, level + 1)}"
            for key in sorted(obj, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj, indent: int = 2) -> str:
    """JSON with sorted keys and 17-significant-digit floats (byte-stable)."""
    return _encode(obj, indent, 0) + "\n"


def digest(obj) -> str:
    return hashlib.sha256(canonical_dumps(obj).encode()).hexdigest()


def load_json_text(text: str, source: str = "<input>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None


def load_json_file(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InstanceError(path, exc.strerror or str(exc)) from None
    return load_json_text(text, path)


def _prob(value, where):
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise InstanceError(where, f"not a decimal number: {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(where, "expected a probability")
    if not 0.0 <= value <= 1.0:
        raise InstanceError(where, f"probability {value} outside [0, 1]")
    return float(value)


def _int(data, key, where, low=None):
    if key not in data:
        raise InstanceError(where, f"missing field {key!r}")
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise InstanceError(f"{where}.{key}", "expected an integer")
    if low is not None and v < low:
        raise InstanceError(f"{where}.{key}", f"must be at least {low}")
    return v


@dataclass
class Instance:
    config: GameConfig
    gamma: TypeDistribution
    rule: object

    def game(self) -> Game:
        return Game(self.config, self.gamma, self.rule)

    def to_json(self) -> dict:
        return {
            "beta": float(self.config.beta),
            "engines": self.config.num_engines,
            "pages": self.config.num_pages,
            "max_threshold": self.config.max_threshold,
            "types": [
                {"pages": sorted(t.pages), "threshold": t.threshold, "prob": fmt_float(p)}
                for t, p in zip(self.gamma.types, self.gamma.probs)
            ],
            "rule": self.rule.to_json(),
        }

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())

    @classmethod
    def from_json(cls, data, source="instance") -> "Instance":
        if not isinstance(data, dict):
            raise InstanceError(source, "top level must be an object")
        known = {"beta", "engines", "pages", "max_threshold", "types", "rule"}
        extra = sorted(set(data) - known)
        if extra:
            raise InstanceError(source, f"unknown fields {extra}")
        if "beta" not in data:
            raise InstanceError(source, "missing field 'beta'")
        beta = _prob(data["beta"], f"{source}.beta")
        k = _int(data, "engines", source, 1)
        N = _int(data, "pages", source, 1)
        T = data.get("max_threshold", 1)
        if isinstance(T, bool) or not isinstance(T, int) or T < 1:
            raise InstanceError(f"{source}.max_threshold", "expected a positive integer")
        if not isinstance(data.get("types"), list) or not data["types"]:
            raise InstanceError(f"{source}.types", "expected a nonempty list")
        types, probs = [], []
        for j, entry in enumerate(data["types"]):
            where = f"{source}.types[{j}]"
            if not isinstance(entry, dict):
                raise InstanceError(where, "expected an object")
            pages = entry.get("pages")
            if not isinstance(pages, list) or not pages:
                raise InstanceError(f"{where}.pages", "expected a nonempty list of page indices")
            if any(isinstance(p, bool) or not isinstance(p, int) or not 0 <= p < N for p in pages):
                raise InstanceError(f"{where}.pages", f"page indices must lie in [0, {N})")
            thr = entry.get("threshold", 1)
            if isinstance(thr, bool) or not isinstance(thr, int) or not 1 <= thr <= T:
                raise InstanceError(f"{where}.threshold", f"must be an integer in [1, {T}]")
            if "prob" not in entry:
                raise InstanceError(where, "missing field 'prob'")
            probs.append(_prob(entry["prob"], f"{where}.prob"))
            try:
                types.append(UserType(frozenset(pages), thr))
            except (ValueError, InvalidGameError) as exc:
                raise InstanceError(where, str(exc)) from None
        rule_data = data.get("rule")
        if not isinstance(rule_data, dict) or "name" not in rule_data:
            raise InstanceError(f"{source}.rule", "expected an object with a 'name'")
        try:
            config = GameConfig(beta, k, N, T)
            gamma = TypeDistribution(tuple(types), tuple(probs), N)
            rule = make_rule(rule_data["name"], k, rule_data.get("params") or {})
            inst = cls(config, gamma, rule)
            inst.game()
        except (InvalidGameError, RuleConfigError, KeyError) as exc:
            raise InstanceError(source, str(exc).strip("'\"")) from None
        except ValueError as exc:
            raise InstanceError(source, str(exc)) from None
        return inst

    @classmethod
    def load(cls, path: str) -> "Instance":
        return cls.from_json(load_json_file(path), path)


def singleton_instance(page_probs, beta, k, rule) -> Instance:
    gamma = TypeDistribution.singleton(page_probs)
    return Instance(GameConfig(beta, k, gamma.num_pages), gamma, rule)


# -- profiles ------------------------------------------------------------------


def profile_to_json(game: Game, W) -> dict:
    """``{"strategies": [...]}``: probability lists for the singleton game, chain lists otherwise."""
    W = np.asarray(W, dtype=float)
    if game.singleton:
        return {"strategies": [row.tolist() for row in W]}
    out = []
    for row in W:
        out.append(
            [
                {"chain": list(game.atoms[j]), "prob": float(row[j])}
                for j in np.flatnonzero(row > 0.0)
            ]
        )
    return {"strategies": out}


def profile_from_json(game: Game, data, source="profile") -> np.ndarray:
    if not isinstance(data, dict) or not isinstance(data.get("strategies"), list):
        raise InstanceError(source, "expected an object with a 'strategies' list")
    strategies = data["strategies"]
    if len(strategies) != game.k:
        raise InstanceError(
            f"{source}.strategies", f"has {len(strategies)} entries, instance has {game.k} engines"
        )
    profile = []
    for i, s in enumerate(strategies):
        where = f"{source}.strategies[{i}]"
        try:
            if s and all(isinstance(v, dict) for v in s):
                atoms = tuple(
                    (tuple(v["chain"]), _prob(v["prob"], f"{where}.prob")) for v in s
                )
                profile.append(PrefixChainStrategy(atoms))
            elif game.singleton:
                profile.append(
                    SingletonStrategy(tuple(_prob(v, f"{where}[{j}]") for j, v in enumerate(s)))
                )
            else:
                raise InstanceError(where, "expected a list of {chain, prob} objects")
        except (InvalidGameError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InstanceError):
                raise
            raise InstanceError(where, str(exc)) from None
    try:
        return game.weight_matrix(profile)
    except (InvalidGameError, ValueError) as exc:
        raise InstanceError(source, str(exc)) from None
