"""Markov user model: stationary engine shares, return times and derivatives.

A user sits on one engine per round.  After a satisfied query the user moves
according to ``success``, and after a failed one according to ``failure``.
With satisfaction profile ``q`` the round-to-round chain is

    P(q) = diag(q) @ success + diag(1 - q) @ failure

and its stationary distribution is the induced selection rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-12


class ReducibleChainError(ValueError):
    """The chain has more than one closed class, so the stationary law is not unique."""


def _closed_classes(P: np.ndarray) -> list:
    k = P.shape[0]
    reach = (P > 0.0) | np.eye(k, dtype=bool)
    for m in range(k):  # transitive closure
        reach |= reach[:, [m]] & reach[[m], :]
    classes = []
    seen = set()
    for i in range(k):
        if i in seen:
            continue
        cls = [j for j in range(k) if reach[i, j] and reach[j, i]]
        seen.update(cls)
        out = set(np.flatnonzero(reach[i])) - set(cls)
        if not out:
            classes.append(cls)
    return classes


def _check_stochastic(M: np.ndarray, label: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{label} matrix must be square")
    if np.any(M < 0.0) or np.any(M > 1.0):
        raise ValueError(f"{label} entries must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(M.sum(axis=1) - 1.0) > ROW_TOL)
    if bad.size:
        raise ValueError(f"{label} rows {bad.tolist()} do not sum to 1")
    return M


class MarkovUserModel:
    def __init__(self, success, failure, check_irreducible=True):
        self.success = _check_stochastic(success, "success")
        self.failure = _check_stochastic(failure, "failure")
        if self.success.shape != self.failure.shape:
            raise ValueError("success and failure matrices differ in size")
        if self.num_engines < 2:
            raise ValueError("need at least two engines")
        if check_irreducible:
            P = self.chain(np.full(self.num_engines, 0.5))
            classes = _closed_classes(P)
            if len(classes) != 1 or len(classes[0]) != self.num_engines:
                raise ReducibleChainError(
                    f"chain at q=1/2 is reducible; closed classes {classes}"
                )

    @property
    def num_engines(self) -> int:
        return self.success.shape[0]

    @property
    def exit_success(self) -> np.ndarray:
        return 1.0 - np.diag(self.success)

    @property
    def exit_failure(self) -> np.ndarray:
        return 1.0 - np.diag(self.failure)

    def chain(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)[..., :, None]
        return q * self.success + (1.0 - q) * self.failure

    def to_json(self) -> dict:
        return {"success": self.success.tolist(), "failure": self.failure.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "MarkovUserModel":
        return cls(data["success"], data["failure"])


@dataclass(frozen=True)
class ReturnTimes:
    """Expected rounds away from a state after leaving it.

    ``None`` marks a time that is undefined because the corresponding exit
    probability is zero; the closed form never uses it.
    """

    r_success: float | None
    r_failure: float | None


def _validate_q(model, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.num_engines,):
        raise ValueError(f"q must have length {model.num_engines}")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise ValueError("q must lie in [0, 1]")
    return q


def _solve_stationary(P: np.ndarray) -> np.ndarray:
    k = P.shape[-1]
    A = np.swapaxes(P, -1, -2) - np.eye(k)
    A[..., -1, :] = 1.0
    b = np.zeros(P.shape[:-2] + (k,))
    b[..., -1] = 1.0
    return np.linalg.solve(A, b[..., None])[..., 0]


def stationary(model: MarkovUserModel, q, validate=False) -> np.ndarray:
    """Stationary distribution of ``P(q)`` by a direct linear solve.

    With ``validate`` the result is cross-checked against power iteration.
    """
    q = _validate_q(model, q)
    P = model.chain(q)
    classes = _closed_classes(P)
    if len(classes) > 1:
        raise ReducibleChainError(
            f"chain at q={q.tolist()} has disconnected closed classes {classes}"
        )
    pi = _solve_stationary(P)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if validate:
        other = stationary_power(model, q)
        if np.max(np.abs(other - pi)) > 1e-12:
            raise ArithmeticError(
                f"linear solve and power iteration disagree by {np.max(np.abs(other - pi)):.3g}"
            )
    return pi


def stationary_power(model: MarkovUserModel, q, tol=1e-14, max_iter=10**6) -> np.ndarray:
    """Power iteration on the lazy chain ``(I + P) / 2`` (same stationary law, aperiodic)."""
    q = _validate_q(model, q)
    P = 0.5 * (np.eye(model.num_engines) + model.chain(q))
    pi = np.full(model.num_engines, 1.0 / model.num_engines)
    for _ in range(max_iter):
        nxt = pi @ P
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise ArithmeticError("power iteration did not converge")


def stationary_batch(model: MarkovUserModel, Q) -> np.ndarray:
    """Stationary distributions for a batch of profiles of shape ``(..., k)``."""
    Q = np.asarray(Q, dtype=float)
    shape = Q.shape
    flat = Q.reshape(-1, shape[-1])
    P = model.chain(flat)
    with np.errstate(all="ignore"):
        try:
            pi = _solve_stationary(P)
        except np.linalg.LinAlgError:
            pi = np.full(flat.shape, np.nan)
    resid = np.abs(np.einsum("mi,mij->mj", pi, P) - pi).max(axis=-1)
    bad = ~np.isfinite(resid) | (resid > 1e-10) | (pi.min(axis=-1) < -1e-12)
    for r in np.flatnonzero(bad):
        pi[r] = stationary(model, flat[r])
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum(axis=-1, keepdims=True)
    return pi.reshape(shape)


def _hitting_times(P: np.ndarray, target: int) -> np.ndarray:
    """Expected steps to reach ``target``; ``inf`` where it is unreachable."""
    k = P.shape[0]
    reach = np.zeros(k, dtype=bool)
    reach[target] = True
    changed = True
    while changed:
        new = reach | (P[:, reach] > 0.0).any(axis=1)
        changed = bool((new != reach).any())
        reach = new
    h = np.full(k, np.inf)
    h[target] = 0.0
    idx = np.flatnonzero(reach & (np.arange(k) != target))
    if idx.size:
        A = np.eye(idx.size) - P[np.ix_(idx, idx)]
        h[idx] = np.linalg.solve(A, np.ones(idx.size))
    return h


def _return_time(row: np.ndarray, exit_prob: float, h: np.ndarray, i: int):
    if exit_prob <= 0.0:
        return None
    dist = row.copy()
    dist[i] = 0.0
    dist /= exit_prob
    mask = dist > 0.0
    return float(np.dot(dist[mask], h[mask]))


def return_times(model: MarkovUserModel, q, i: int) -> ReturnTimes:
    """Expected time away from state ``i`` after leaving it on success / failure.

    Depends only on the other coordinates of ``q``.
    """
    q = _validate_q(model, q)
    h = _hitting_times(model.chain(q), i)
    return ReturnTimes(
        _return_time(model.success[i], model.exit_success[i], h, i),
        _return_time(model.failure[i], model.exit_failure[i], h, i),
    )


def _stay_terms(model, q, i):
    """``(e^s r^s, e^f r^f)`` with the undefined products set to zero."""
    rt = return_times(model, q, i)
    es, ef = model.exit_success[i], model.exit_failure[i]
    b = 0.0 if rt.r_success is None else es * rt.r_success
    a = 0.0 if rt.r_failure is None else ef * rt.r_failure
    return b, a


def closed_form_stationary(model: MarkovUserModel, q) -> np.ndarray:
    """Stationary law from stay lengths and return times, one state at a time."""
    q = _validate_q(model, q)
    pi = np.empty(model.num_engines)
    for i in range(model.num_engines):
        b, a = _stay_terms(model, q, i)
        denom = 1.0
        if q[i] > 0.0:
            denom += q[i] * b
        if q[i] < 1.0:
            denom += (1.0 - q[i]) * a
        pi[i] = 0.0 if np.isinf(denom) else 1.0 / denom
    return pi / pi.sum()


def stationary_derivatives(model: MarkovUserModel, q, i: int) -> tuple:
    """First and second derivative of the stationary share of ``i`` in its own ``q_i``."""
    q = _validate_q(model, q)
    b, a = _stay_terms(model, q, i)
    D = 1.0 + a * (1.0 - q[i]) + b * q[i]
    return (a - b) / D**2, 2.0 * (a - b) ** 2 / D**3


def check_markov_monotone(model: MarkovUserModel, samples=50, seed=42, tol=1e-10):
    from .rules import PropertyReport

    ds, df = np.diag(model.success), np.diag(model.failure)
    bad = np.flatnonzero(ds < df)
    if bad.size:
        i = int(bad[0])
        return PropertyReport(
            "markov_monotone",
            False,
            witness={"state": i, "stay_success": float(ds[i]), "stay_failure": float(df[i])},
        )
    rng = np.random.default_rng(seed)
    checked = 0
    for _ in range(samples):
        q = rng.uniform(0.0, 1.0, model.num_engines)
        for i in range(model.num_engines):
            rt = return_times(model, q, i)
            if rt.r_success is None or rt.r_failure is None:
                continue
            checked += 1
            if rt.r_success > rt.r_failure + tol:
                return PropertyReport(
                    "markov_monotone",
                    False,
                    checked=checked,
                    witness={
                        "state": i,
                        "q": q.tolist(),
                        "r_success": rt.r_success,
                        "r_failure": rt.r_failure,
                    },
                )
    return PropertyReport("markov_monotone", True, strict=bool(np.all(ds > df)), checked=checked)


# -- model constructors -------------------------------------------------------


def switch_on_failure_model(k: int) -> MarkovUserModel:
    """Stay after success, move uniformly to another engine after failure."""
    failure = (np.ones((k, k)) - np.eye(k)) / (k - 1)
    return MarkovUserModel(np.eye(k), failure, check_irreducible=False)


def random_model(k: int, rng) -> MarkovUserModel:
    """Dense (hence irreducible) random model."""
    s = rng.dirichlet(np.ones(k), size=k)
    f = rng.dirichlet(np.ones(k), size=k)
    return MarkovUserModel(s, f)


def random_strictly_monotone_model(k: int, rng) -> MarkovUserModel:
    """Random model with ``stay_success > stay_failure`` and equal return times.

    Both matrices share one exit distribution per state, so the return times
    after success and after failure coincide and monotonicity holds at every q.
    """
    exit_dist = np.zeros((k, k))
    for i in range(k):
        w = rng.dirichlet(np.ones(k - 1))
        exit_dist[i, np.arange(k) != i] = w
    ef = rng.uniform(0.3, 1.0, k)
    es = ef * rng.uniform(0.0, 0.7, k)
    succ = es[:, None] * exit_dist + np.diag(1.0 - es)
    fail = ef[:, None] * exit_dist + np.diag(1.0 - ef)
    return MarkovUserModel(succ, fail)
