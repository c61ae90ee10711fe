"""Best responses, epsilon-Nash verification and equilibrium solvers.

The continuous best response is a heuristic (multi-start projected gradient
ascent); certification always also runs the exact enumeration over
deterministic strategies, and the shift-deviation search covers the small
mass transfers that separate asymmetric profiles from equilibria.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .game import Game, SingletonStrategy

DEFAULT_EPSILON = 1e-6
DETERMINISTIC_LIMIT = 10**6
GRID_PROFILE_LIMIT = 2 * 10**6
FD_STEP = 1e-6
MAX_STARTS = 24


class WrongGameError(ValueError):
    """Operation needs a different kind of game (e.g. the singleton game)."""


class NotApplicableError(ValueError):
    """Closed form does not cover this parameter regime."""


class SizeLimitError(ValueError):
    """Enumeration would exceed the desk-scale guard."""


class NonConvergenceError(RuntimeError):
    """Iterative solver stopped without meeting its tolerance."""


@dataclass
class EquilibriumReport:
    regrets: list
    witnesses: list
    epsilon: float
    payoffs: list = field(default_factory=list)

    @property
    def is_equilibrium(self) -> bool:
        return max(self.regrets) <= self.epsilon

    @property
    def max_regret(self) -> float:
        return max(self.regrets)

    def to_json(self) -> dict:
        return {
            "regrets": self.regrets,
            "max_regret": self.max_regret,
            "witnesses": self.witnesses,
            "epsilon": self.epsilon,
            "payoffs": self.payoffs,
            "is_equilibrium": self.is_equilibrium,
        }


def project_simplex(V: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    V = np.atleast_2d(V)
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = U - css / ind > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def _as_matrix(game: Game, profile) -> np.ndarray:
    if isinstance(profile, np.ndarray) and profile.ndim == 2:
        if profile.shape != (game.k, game.n_atoms):
            raise ValueError(f"weight matrix must have shape ({game.k}, {game.n_atoms})")
        return profile.astype(float)
    return game.weight_matrix(profile)


class _EngineObjective:
    """Payoff of one engine as a function of its own atom weights (opponents fixed)."""

    def __init__(self, game: Game, W: np.ndarray, i: int):
        self.game = game
        self.i = i
        self.q_others = game.satisfaction(W[None])[0]  # (types, k)
        self.hit = game.hit
        self.gamma = game.type_probs
        self.beta = game.beta

    def _type_values(self, X: np.ndarray) -> np.ndarray:
        """Per-type payoff terms for own satisfaction ``X`` of shape ``(m, types)``."""
        Q = np.broadcast_to(self.q_others, X.shape + (self.game.k,)).copy()
        Q[..., self.i] = X
        F = self.game.rule.evaluate_batch(Q)[..., self.i]
        return F * (self.beta + (1.0 - self.beta) * X)

    def own_q(self, Wi: np.ndarray) -> np.ndarray:
        return np.clip(Wi @ self.hit.T, 0.0, 1.0)

    def values(self, Wi: np.ndarray) -> np.ndarray:
        X = self.own_q(Wi)
        X[X > 1.0 - 1e-12] = 1.0
        X[X < 1e-12] = 0.0
        return self._type_values(X) @ self.gamma

    def gradients(self, Wi: np.ndarray) -> np.ndarray:
        X = self.own_q(Wi)
        lo = np.maximum(X - FD_STEP, 0.0)
        hi = np.minimum(X + FD_STEP, 1.0)
        dv = self._type_values(hi) - self._type_values(lo)
        dq = self.gamma * dv / (hi - lo)
        return dq @ self.hit


def _ascent(obj: _EngineObjective, starts: np.ndarray, max_iter=300, n_steps=24):
    """Batched projected gradient ascent with a geometric step search per start."""
    Wi = project_simplex(starts)
    val = obj.values(Wi)
    scale = np.ones(len(Wi))
    active = np.ones(len(Wi), dtype=bool)
    factors = 2.0 ** -np.arange(n_steps)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g = obj.gradients(Wi[idx])
        gmax = np.abs(g).max(axis=1)
        gmax[gmax == 0.0] = 1.0
        steps = (scale[idx] / gmax)[:, None] * factors[None, :]
        cand = Wi[idx][:, None, :] + steps[..., None] * g[:, None, :]
        cand = project_simplex(cand.reshape(-1, Wi.shape[1])).reshape(cand.shape)
        cv = obj.values(cand.reshape(-1, Wi.shape[1])).reshape(idx.size, n_steps)
        best = np.argmax(cv, axis=1)
        bv = cv[np.arange(idx.size), best]
        improved = bv > val[idx] + 1e-15
        upd = idx[improved]
        Wi[upd] = cand[improved, best[improved]]
        val[upd] = bv[improved]
        scale[upd] = np.minimum(scale[upd] * factors[best[improved]] * 4.0, 4.0)
        active[idx[~improved]] = False
    return Wi, val


def _polish(obj: _EngineObjective, w: np.ndarray, v: float, grid=False, rounds=50, width=8):
    """Pairwise mass transfers between the most and least promising atoms."""
    n = w.size
    for _ in range(rounds):
        g = obj.gradients(w[None])[0]
        support = np.flatnonzero(w > 0.0)
        donors = support[np.argsort(g[support])[:width]]
        takers = np.argsort(-g)[:width]
        moves = []
        for b in donors:
            amounts = {w[b], w[b] / 2, 1e-2, 1e-3, 1e-4, 1e-6}
            if grid:
                amounts |= {j / 64 for j in range(1, 65)}
            for a in takers:
                if a == b:
                    continue
                for d in amounts:
                    if 0.0 < d <= w[b]:
                        m = w.copy()
                        m[b] -= d
                        m[a] += d
                        moves.append(m)
        if grid:
            # coordinate line search on the 1/64 grid toward vertices
            for a in range(n) if n <= 64 else takers:
                e = np.zeros(n)
                e[a] = 1.0
                for t in np.arange(1, 65) / 64:
                    moves.append((1 - t) * w + t * e)
        if not moves:
            break
        M = np.maximum(np.array(moves), 0.0)
        M /= M.sum(axis=1, keepdims=True)
        vals = obj.values(M)
        j = int(np.argmax(vals))
        if vals[j] <= v + 1e-15:
            break
        w, v = M[j], float(vals[j])
    return w, v


def _separable_start(obj: _EngineObjective, grid=2048, iters=100):
    """Lagrangian allocation for the singleton game, where the payoff splits by page.

    For a multiplier ``lam`` each page independently takes the grid weight
    maximizing ``value - lam * weight``; ``lam`` is bisected until the
    weights sum to about one.
    """
    xs = np.linspace(0.0, 1.0, grid)
    page_of_type = np.argmax(obj.hit, axis=1)
    X = np.broadcast_to(xs[:, None], (grid, page_of_type.size))
    H = (obj._type_values(X) * obj.gamma).T  # (types, grid)
    n = obj.hit.shape[1]
    P = np.zeros((n, grid))
    np.add.at(P, page_of_type, H)

    def alloc(lam):
        return xs[np.argmax(P - lam * xs, axis=1)]

    span = np.abs(P).max() * grid + 1.0
    lo, hi = -span, span
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if alloc(mid).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    out = []
    for lam in (lo, hi):
        w = alloc(lam)
        out.append(w / w.sum() if w.sum() > 0 else np.full(n, 1.0 / n))
    return out


def continuous_best_response(game: Game, W, i: int, seed=42, n_starts=None, extra_starts=()):
    """Heuristic maximizer of engine ``i``'s payoff over its whole simplex.

    Starts: the best vertices, the type-weighted point, the current
    strategy, ``extra_starts``, two seeded random points and, for the
    singleton game, a separable Lagrangian allocation.  ``n_starts``
    defaults to ``n_atoms + 3`` capped at ``MAX_STARTS``.
    """
    W = _as_matrix(game, W)
    n = game.n_atoms
    rng = np.random.default_rng(seed)
    n_starts = n_starts or min(n + 3, MAX_STARTS)
    obj = _EngineObjective(game, W, i)
    n_vert = max(1, min(n, n_starts - 3))
    if n_vert < n:
        vert_vals = deterministic_payoffs(game, W, i)
        chosen = np.sort(np.argsort(-vert_vals, kind="stable")[:n_vert])
    else:
        chosen = np.arange(n)
    starts = [_unit_rows(n, 0, n)[chosen] if n <= 4096 else np.eye(1, n, 0)]
    if game.singleton:
        starts.append(game.gamma.page_probs()[None])
        starts.extend(s[None] for s in _separable_start(obj))
    else:
        starts.append(np.full((1, n), 1.0 / n))
    starts.append(W[i][None])
    for s in extra_starts:
        starts.append(np.asarray(s, dtype=float)[None])
    starts.append(rng.dirichlet(np.ones(n), size=2))
    starts = np.vstack(starts)
    Wi, vals = _ascent(obj, starts)
    j = int(np.argmax(vals))
    w, v = _polish(obj, Wi[j], float(vals[j]), grid=not game.rule.smooth)
    return w, v


def deterministic_payoffs(game: Game, W, i: int) -> np.ndarray:
    """Payoff of engine ``i`` for every deterministic strategy (one per atom)."""
    W = _as_matrix(game, W)
    n = game.n_atoms
    if n > DETERMINISTIC_LIMIT:
        raise SizeLimitError(f"{n} deterministic strategies exceed the limit {DETERMINISTIC_LIMIT}")
    obj = _EngineObjective(game, W, i)
    out = np.empty(n)
    for start in range(0, n, 4096):
        block = np.eye(n)[start : start + 4096] if n <= 4096 else _unit_rows(n, start, 4096)
        out[start : start + block.shape[0]] = obj.values(block)
    return out


def _unit_rows(n, start, size):
    stop = min(n, start + size)
    rows = np.zeros((stop - start, n))
    rows[np.arange(stop - start), np.arange(start, stop)] = 1.0
    return rows


def best_response_deterministic(game: Game, W, i: int):
    """Exact best deterministic strategy for engine ``i``; ties go to the lowest atom index."""
    vals = deterministic_payoffs(game, W, i)
    j = int(np.argmax(vals))
    return game.atoms[j], float(vals[j])


def best_response_singleton(game: Game, opponents, engine: int = 0, seed=42):
    """Best mixed page distribution against the given opponent strategies."""
    if not game.singleton:
        raise WrongGameError("best_response_singleton needs a singleton game")
    opponents = list(opponents)
    if len(opponents) != game.k - 1:
        raise ValueError(f"need {game.k - 1} opponent strategies")
    placeholder = SingletonStrategy.vertex(game.config.num_pages, 0)
    profile = opponents[:engine] + [placeholder] + opponents[engine:]
    W = game.weight_matrix(profile)
    w, v = continuous_best_response(game, W, engine, seed=seed)
    det = deterministic_payoffs(game, W, engine)
    j = int(np.argmax(det))
    if det[j] >= v:
        w, v = np.eye(game.n_atoms)[j], float(det[j])
    return SingletonStrategy(tuple(w / w.sum())), v


def _group_index(rule):
    out = {}
    for g, members in enumerate(rule.relabeling_groups):
        for i in members:
            out[i] = g
    return out


def verify_epsilon_nash(game: Game, profile, epsilon=DEFAULT_EPSILON, seed=42, continuous=True):
    """Regret of every engine against deterministic and (optionally) continuous deviations."""
    W = _as_matrix(game, profile)
    payoffs = game.payoffs(W)
    regrets, witnesses = [], []
    # swappable engines with equal strategies face the same problem
    group_of = _group_index(game.rule)
    shared = {}
    for i in range(game.k):
        key = (group_of[i], W[i].tobytes())
        if key in shared:
            best, witness = shared[key]
        else:
            det = deterministic_payoffs(game, W, i)
            j = int(np.argmax(det))
            best, witness = float(det[j]), {"kind": "deterministic", "atom": list(game.atoms[j])}
            if continuous:
                w, v = continuous_best_response(game, W, i, seed=seed + i)
                if v > best:
                    best, witness = v, {"kind": "continuous", "weights": w.tolist()}
            shared[key] = best, witness
        regret = max(best - float(payoffs[i]), 0.0)
        regrets.append(regret)
        witnesses.append(dict(witness, payoff=best) if regret > epsilon else None)
    return EquilibriumReport(regrets, witnesses, epsilon, payoffs.tolist())


# -- closed forms for the proportional rule -------------------------------------


def symmetric_equilibrium_beta1_proportional(gamma) -> SingletonStrategy:
    """Every engine shows page ``n`` with the probability that users want it."""
    p = _page_probs(gamma)
    return SingletonStrategy(tuple(p))


def _page_probs(gamma) -> np.ndarray:
    if hasattr(gamma, "page_probs"):
        return gamma.page_probs()
    p = np.asarray(gamma, dtype=float)
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("page probabilities must sum to 1")
    return p


@dataclass
class SymmetricSolverState:
    z: float
    lambda_prime: float
    page_probs: SingletonStrategy
    iterations: int
    residual: float

    def to_json(self):
        return {
            "z": self.z,
            "lambda_prime": self.lambda_prime,
            "page_probs": list(self.page_probs.probs),
            "iterations": self.iterations,
            "residual": self.residual,
        }


@dataclass
class HessianCertificate:
    diagonal: list
    all_negative: bool
    global_concavity: bool
    instance_condition: bool
    max_opponent_mass: float

    def to_json(self):
        return {
            "diagonal": self.diagonal,
            "all_negative": self.all_negative,
            "global_concavity": self.global_concavity,
            "instance_condition": self.instance_condition,
            "max_opponent_mass": self.max_opponent_mass,
        }


def lambda_sum(lam, p, z):
    return float(np.sum(p / (lam - z * p)))


def symmetric_equilibrium_proportional(gamma, beta: float, k: int, tol=1e-12, max_iter=2000):
    """Unique symmetric stationary point of the proportional-rule game.

    Solves ``sum_n p_n / (lam - z p_n) = 1`` for ``lam > z max(p)`` by
    bisection, where ``z = (2k-1)(1-beta) / ((k-1) beta)``; the page
    probabilities are then ``p_n / (lam - z p_n)``.  The certificate reports
    the sign of the diagonal payoff Hessian at that point: if every entry is
    negative the payoff is strictly concave in the engine's own strategy, so
    the point is a best response.
    """
    if not 0.0 < beta <= 1.0:
        raise NotApplicableError(f"symmetric closed form needs beta in (0, 1], got {beta}")
    if k < 2:
        raise ValueError("need at least two engines")
    p = _page_probs(gamma)
    z = (2 * k - 1) * (1.0 - beta) / ((k - 1) * beta)
    lo = z * p.max()
    hi = lo + 1.0  # every denominator >= 1 here, so the sum is <= 1
    if lambda_sum(hi, p, z) > 1.0 + tol:
        raise ArithmeticError(f"bracket failed: sum at {hi} is {lambda_sum(hi, p, z)}")
    it = 0
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if lambda_sum(mid, p, z) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = hi
    residual = lambda_sum(lam, p, z) - 1.0
    if abs(residual) > tol:
        raise ArithmeticError(f"bisection residual {residual:.3g} above tolerance")
    q = p / (lam - z * p)
    q = q / q.sum()
    s = (k - 1) * q
    diag = -2.0 * p * s * (beta - (1.0 - beta) * s) / (q + s) ** 3
    cert = HessianCertificate(
        diagonal=diag.tolist(),
        all_negative=bool(np.all(diag < 0.0)),
        global_concavity=beta > 1.0 - 1.0 / k,
        instance_condition=bool(np.all(beta - (1.0 - beta) * s > 0.0)),
        max_opponent_mass=float(s.max()),
    )
    state = SymmetricSolverState(z, lam, SingletonStrategy(tuple(q)), it, residual)
    return state, cert


# -- enumeration -----------------------------------------------------------------


def simplex_grid(num_pages: int, m: int) -> np.ndarray:
    """All probability vectors with entries in ``{0, 1/m, ..., 1}``."""
    rows = []
    for cuts in itertools.combinations(range(m + num_pages - 1), num_pages - 1):
        parts = np.diff((-1,) + cuts + (m + num_pages - 1,)) - 1
        rows.append(parts / m)
    return np.array(rows[::-1], dtype=float)


def brute_force_equilibria(
    game: Game, grid_m=12, epsilon=DEFAULT_EPSILON, refine=True, seed=42, max_profiles=GRID_PROFILE_LIMIT
):
    """Grid profiles from which no engine gains more than ``epsilon`` by a grid deviation.

    Returns a list of ``(weights, report)`` where ``report`` is the continuous
    verification (``None`` when ``refine`` is off).  ``grid_m=1`` enumerates
    exactly the deterministic profiles.
    """
    if not game.singleton:
        raise WrongGameError("brute force search is implemented for the singleton game")
    N, k = game.config.num_pages, game.k
    S = math.comb(grid_m + N - 1, N - 1)
    if S**k > max_profiles:
        raise SizeLimitError(f"{S**k} grid profiles (S={S}, k={k}) exceed the limit {max_profiles}")
    G = simplex_grid(N, grid_m)
    gamma = game.gamma.page_probs()
    U = kernels.grid_payoffs(game.rule, G, gamma, game.beta, k)
    shape = (G.shape[0],) * k
    ok = np.ones(shape, dtype=bool)
    for i in range(k):
        Ui = U[i].reshape(shape)
        ok &= Ui >= Ui.max(axis=i, keepdims=True) - epsilon
    found = []
    for idx in zip(*np.nonzero(ok)):
        W = G[list(idx)]
        report = verify_epsilon_nash(game, W, epsilon, seed=seed) if refine else None
        found.append((W, report))
    return found


def find_improving_deviation(game: Game, profile, threshold=1e-9, shifts=(1e-2, 1e-3, 1e-4)):
    """First deviation gaining more than ``threshold``: vertices first, then small mass shifts.

    Returns ``(engine, weights, gain)`` or ``None`` when nothing was found at
    the tested scales.
    """
    W = _as_matrix(game, profile)
    base = game.payoffs(W)
    for i in range(game.k):
        det = deterministic_payoffs(game, W, i)
        j = int(np.argmax(det))
        if det[j] - base[i] > threshold:
            return i, np.eye(game.n_atoms)[j], float(det[j] - base[i])
    n = game.n_atoms
    for eps in shifts:
        for i in range(game.k):
            obj = _EngineObjective(game, W, i)
            moves = []
            for b in np.flatnonzero(W[i] >= eps):
                for a in range(n):
                    if a != b:
                        m = W[i].copy()
                        m[b] -= eps
                        m[a] += eps
                        moves.append(m)
            if not moves:
                continue
            M = np.array(moves)
            gains = obj.values(M) - base[i]
            j = int(np.argmax(gains))
            if gains[j] > threshold:
                return i, M[j], float(gains[j])
    return None


def best_response_dynamics(game: Game, start=None, epsilon=DEFAULT_EPSILON, max_rounds=200, seed=42):
    """Round-robin best responses until every regret is at most ``epsilon``.

    Raises :class:`NonConvergenceError` when ``max_rounds`` is exhausted.
    """
    rng = np.random.default_rng(seed)
    if start is None:
        W = rng.dirichlet(np.ones(game.n_atoms), size=game.k)
    else:
        W = _as_matrix(game, start)
    for rnd in range(max_rounds):
        moved = False
        for i in range(game.k):
            current = float(game.payoffs(W)[i])
            det = deterministic_payoffs(game, W, i)
            j = int(np.argmax(det))
            w, v = continuous_best_response(game, W, i, seed=seed + rnd)
            if det[j] >= v:
                w, v = np.eye(game.n_atoms)[j], float(det[j])
            if v > current + epsilon:
                W[i] = w
                moved = True
        if not moved:
            return W, rnd + 1
    raise NonConvergenceError(f"best-response dynamics did not settle in {max_rounds} rounds")


def deterministic_payoff_tensor(game: Game, max_profiles=GRID_PROFILE_LIMIT) -> np.ndarray:
    """Payoffs at every deterministic profile, shape ``(k,) + (n_atoms,) * k``."""
    n, k = game.n_atoms, game.k
    total = n**k
    if total > max_profiles:
        raise SizeLimitError(f"{total} deterministic profiles exceed the limit {max_profiles}")
    if game.singleton:
        U = kernels.grid_payoffs(game.rule, np.eye(n), game.gamma.page_probs(), game.beta, k)
        return U.reshape((k,) + (n,) * k)
    U = np.empty((k, total))
    for start in range(0, total, 4096):
        idx = np.arange(start, min(start + 4096, total))
        digits = np.stack(np.unravel_index(idx, (n,) * k), axis=1)
        W = np.zeros((idx.size, k, n))
        W[np.arange(idx.size)[:, None], np.arange(k)[None, :], digits] = 1.0
        U[:, idx] = game.payoffs(W).T
    return U.reshape((k,) + (n,) * k)


def deterministic_equilibria(
    game: Game, epsilon=DEFAULT_EPSILON, continuous=True, seed=42, limit=1000, up_to_relabeling=False
):
    """Deterministic profiles that survive deterministic deviations, then full verification.

    Returns ``(weights, report)`` pairs for the profiles whose report is an
    equilibrium (at most ``limit`` candidates are verified, in index order).
    With ``up_to_relabeling`` only profiles whose atom indices are
    nondecreasing inside each of the rule's relabeling groups are kept, one
    per class of equivalent profiles.
    """
    U = deterministic_payoff_tensor(game)
    n, k = game.n_atoms, game.k
    ok = np.ones(U.shape[1:], dtype=bool)
    for i in range(k):
        ok &= U[i] >= U[i].max(axis=i, keepdims=True) - epsilon
    if up_to_relabeling:
        for members in game.rule.relabeling_groups:
            for a, b in zip(members, members[1:]):
                ia = np.arange(n).reshape([-1 if d == a else 1 for d in range(k)])
                ib = np.arange(n).reshape([-1 if d == b else 1 for d in range(k)])
                ok &= ia <= ib
    out = []
    for idx in list(zip(*np.nonzero(ok)))[:limit]:
        W = np.zeros((k, n))
        W[np.arange(k), list(idx)] = 1.0
        report = verify_epsilon_nash(game, W, epsilon, seed=seed, continuous=continuous)
        if report.is_equilibrium:
            out.append((W, report))
    return out
