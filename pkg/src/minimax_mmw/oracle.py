"""Best responses for Bob and strategy recovery from transcripts.

Bob's best response against a fixed snapshot ``rho`` is found by letting
Bob play alone against a primed referee: ``rho`` is purified with an extra
register ``A`` that rides along with V, Bob now moves first, and he tries
to make the original referee reject. The primed game has no second player,
so its MMW solve uses a constant oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import qmath
from .chain import referee_chain
from .game import Referee, Transcript, UnitaryStrategy, ValidationError, bob_measurement
from .mmw import Schedule, SolveResult, run_chain
from .qmath import dag

DEFAULT_MIX_SIZE = 8
# The primed solves stop on a certified gap rather than on the running
# average, so they can take the largest step the regret bound allows.
PRIMED_GAMMA = 0.49


@dataclass(frozen=True, eq=False)
class PrimedReferee:
    """One-sided game whose value is ``1 - max_P <rho, P>`` over Bob's operators."""

    original: Referee
    rho: np.ndarray
    referee: Referee
    d_A: int

    @classmethod
    def build(cls, R: Referee, rho: np.ndarray) -> "PrimedReferee":
        if R.b < 1:
            raise ValidationError("the primed referee needs b >= 1")
        rho = qmath.require_density(rho)
        if rho.shape != (R.D, R.D):
            raise ValidationError(f"rho must be {R.D}x{R.D}")
        d_A = R.D
        phi = qmath.purify(rho, d_A)
        psi = np.kron(R.V(R.a), np.eye(d_A)) @ phi
        eye_A = np.eye(d_A)
        V_list = tuple(np.kron(R.V(R.a + i), eye_A) for i in range(1, R.b + 1))
        Pi = np.kron(np.eye(R.D) - R.Pi, eye_A)
        primed = Referee(R.d_C, R.d_V * d_A, R.b, 0, psi, V_list, Pi, name=f"{R.name}-primed")
        return cls(R, rho, primed, d_A)

    @property
    def Q(self) -> np.ndarray:
        """Constant best response of the primed game."""
        R = self.referee
        V = R.V(R.a)
        return dag(V) @ R.Pi @ V


def singleton_oracle(R: Referee):
    """Constant weak optimiser returning ``V_a^* Pi V_a`` (only valid when b = 0)."""
    if R.b != 0:
        raise ValidationError(f"singleton oracle needs b = 0, referee has b = {R.b}")
    V = R.V(R.a)
    P = 0.5 * (dag(V) @ R.Pi @ V + dag(dag(V) @ R.Pi @ V))
    payload = {"bob": UnitaryStrategy(1, ()), "error_bound": 0.0}

    def oracle(rho, accuracy):
        return P, payload

    oracle.P = P
    return oracle


# ---------------------------------------------------------------------------
# Purification chains


def _chain_unitaries(
    d_C: int,
    d_R: int,
    start: np.ndarray,
    between: Sequence[np.ndarray],
    states: Sequence[np.ndarray],
    d_P: int,
) -> list:
    """Unitaries on C⊗P walking a purification along a consistent transcript.

    ``start`` is the initial ket on C⊗R, ``between[i]`` the referee unitary
    applied before turn ``i`` (identity for the first turn) and ``states``
    the snapshots on C⊗R after each turn.
    """
    shape = qmath.SpaceShape.of(C=d_C, R=d_R, P=d_P)
    cur = np.zeros((d_C * d_R, d_P), dtype=complex)
    cur[:, 0] = start
    cur = cur.reshape(-1)
    out = []
    for Vi, rho in zip(between, states):
        prior = (np.kron(Vi, np.eye(d_P)) @ cur)
        target = qmath.purify(qmath.clean_density(rho), d_P)
        U = qmath.purification_transfer(prior, target, shape, ("C", "P"))
        out.append(U)
        cur = _apply_CP(U, prior, d_C, d_R, d_P)
    return out


def _apply_CP(U: np.ndarray, ket: np.ndarray, d_C: int, d_R: int, d_P: int) -> np.ndarray:
    T = ket.reshape(d_C, d_R, d_P).transpose(0, 2, 1).reshape(d_C * d_P, d_R)
    T = (U @ T).reshape(d_C, d_P, d_R).transpose(0, 2, 1)
    return T.reshape(-1)


def _check_consistent(R: Referee, t: Transcript, what: str):
    res = referee_chain(R).residual_norms(list(t.states))
    worst = max(res) if res else 0.0
    if worst > qmath.TAU_FIX:
        raise ValidationError(f"{what}: transcript residual {worst:.3g} exceeds {qmath.TAU_FIX:g}; round it first")


def recover_unitaries(Rp: PrimedReferee, t: Transcript) -> UnitaryStrategy:
    """Bob's unitaries on C⊗B reproducing a consistent transcript of the primed game."""
    R = Rp.referee
    if len(t) != R.a:
        raise ValidationError(f"transcript has {len(t)} states, primed referee expects {R.a}")
    _check_consistent(R, t, "recover_unitaries")
    between = [R.V(i) for i in range(R.a)]
    U = _chain_unitaries(R.d_C, R.d_V, R.psi, between, t.states, R.D)
    return UnitaryStrategy(R.D, tuple(U))


def extract_alice(R: Referee, t: Transcript) -> UnitaryStrategy:
    """Alice's unitaries on C⊗A whose honest transcript is ``t``."""
    if len(t) != R.a:
        raise ValidationError(f"transcript has {len(t)} states, referee expects {R.a}")
    _check_consistent(R, t, "extract_alice")
    between = [R.V(i) for i in range(R.a)]
    U = _chain_unitaries(R.d_C, R.d_V, R.psi, between, t.states, R.D)
    return UnitaryStrategy(R.D, tuple(U))


# ---------------------------------------------------------------------------
# Weak optimisation


def inner_schedule(tol: float, a: int, D: int, max_iters: int = 20000) -> Schedule:
    """Practical schedule for a primed solve targeting certified error ``tol``."""
    return Schedule.practical(2 * tol, a, D, gamma=PRIMED_GAMMA, max_iters=max_iters, check_every=25, patience=1)


@dataclass
class BestResponse:
    P: np.ndarray
    bob: UnitaryStrategy
    value: float
    error_bound: float
    inner: Optional[SolveResult] = None

    def as_payload(self) -> dict:
        return {"bob": self.bob, "error_bound": self.error_bound, "value": self.value}


def best_response(
    R: Referee,
    rho: np.ndarray,
    tol: float,
    max_iters: int = 20000,
    sched: Optional[Schedule] = None,
) -> BestResponse:
    """Bob's response to ``rho`` with a certified bound on its suboptimality.

    ``error_bound`` bounds ``max_P <rho, P> - <rho, P_returned>`` from above:
    the primed solve certifies ``1 - lower`` as an upper bound on the
    optimum and the returned value is evaluated exactly. The primed solve
    stops once the bound (estimated from the rounded average) is at most
    ``tol``, or at ``max_iters``.
    """
    rho = qmath.require_density(rho)
    if R.b == 0:
        oracle = singleton_oracle(R)
        P = oracle.P
        return BestResponse(P, UnitaryStrategy(1, ()), float(np.real(np.vdot(rho, P))), 0.0)
    Rp = PrimedReferee.build(R, rho)
    prim = Rp.referee
    chain = referee_chain(prim)
    Q = Rp.Q
    Q = 0.5 * (Q + dag(Q))

    def constant(_rho, _acc):
        return Q, None

    def certify(avg_states, avg_P, lower):
        rounded = chain.round(avg_states)
        return float(np.real(np.vdot(rounded[-1], Q))) - lower

    if sched is None:
        sched = inner_schedule(tol, prim.a, prim.D, max_iters)
    res = run_chain(chain, constant, sched, certify=certify)
    bob = recover_unitaries(Rp, res.rounded_transcript)
    P = bob_measurement(R, bob)
    value = float(np.real(np.vdot(rho, P)))
    bound = max(0.0, (1.0 - res.lower_bound) - value)
    return BestResponse(P, bob, value, bound, res)


def weak_optimize(R: Referee, rho: np.ndarray, delta: float, **kwargs):
    """``(P, bob)`` with ``<rho, P>`` within ``delta`` of Bob's best.

    The primed solve targets a certified error of ``delta / 2``; the other
    half is left as slack.
    """
    br = best_response(R, rho, delta / 2, **kwargs)
    return br.P, br.bob


class BestResponseOracle:
    """Weak optimiser for the outer solve, with reuse of earlier answers.

    A stored answer with certified error ``e`` at ``rho_k`` is at most
    ``e + 2 * D(rho, rho_k)`` away from optimal at ``rho`` (D the trace
    distance), so it is returned whenever that is within the requested
    accuracy. Otherwise a fresh primed solve at half the accuracy runs.
    Answers for one stored point share a single payload object.
    """

    def __init__(self, R: Referee, max_iters: int = 20000, reuse: bool = True):
        if R.b < 1:
            raise ValidationError("BestResponseOracle needs b >= 1; use singleton_oracle")
        self.R = R
        self.max_iters = max_iters
        self.reuse = reuse
        self.points: list[np.ndarray] = []
        self.responses: list[BestResponse] = []
        self.payloads: list[dict] = []
        self._stack = np.zeros((0, R.D, R.D), dtype=complex)
        self.solves = 0
        self.hits = 0
        self.max_error = 0.0
        self._last = -1

    def _fits(self, k: int, rho: np.ndarray, accuracy: float):
        e = self.responses[k].error_bound
        if e >= accuracy:
            return None
        err = e + 2 * qmath.trace_distance(rho, self.points[k])
        return err if err <= accuracy else None

    def _lookup(self, rho: np.ndarray, accuracy: float):
        if self._last >= 0:
            err = self._fits(self._last, rho, accuracy)
            if err is not None:
                return self._last, err
        if not self.points:
            return None
        # Frobenius norm lower-bounds twice the trace distance
        fro = np.linalg.norm((self._stack - rho).reshape(len(self.points), -1), axis=1)
        slack = accuracy - np.array([br.error_bound for br in self.responses])
        for k in np.argsort(fro - slack):
            if fro[k] > slack[k]:
                break
            if k == self._last:
                continue
            err = self._fits(int(k), rho, accuracy)
            if err is not None:
                return int(k), err
        return None

    def __call__(self, rho: np.ndarray, accuracy: float):
        if self.reuse:
            hit = self._lookup(rho, accuracy)
            if hit is not None:
                k, err = hit
                self._last = k
                self.hits += 1
                self.max_error = max(self.max_error, err)
                return self.responses[k].P, self.payloads[k]
        br = best_response(self.R, rho, accuracy / 2, max_iters=self.max_iters)
        self.solves += 1
        inner_iters = br.inner.iterations_run if br.inner is not None else 0
        br.inner = None
        k = len(self.points)
        self.points.append(np.array(rho, copy=True))
        self.responses.append(br)
        self.payloads.append({"bob": br.bob, "error_bound": br.error_bound, "entry": k, "inner_iterations": inner_iters})
        self._stack = np.concatenate([self._stack, self.points[-1][None]], axis=0)
        self._last = k
        self.max_error = max(self.max_error, br.error_bound)
        return br.P, self.payloads[k]

    def stats(self) -> dict:
        return {
            "solves": self.solves,
            "reuses": self.hits,
            "max_error_bound": self.max_error,
        }


def make_oracle(R: Referee, **kwargs):
    """Singleton oracle when Bob has no turns, nested best responses otherwise."""
    if R.b == 0:
        return singleton_oracle(R)
    return BestResponseOracle(R, **kwargs)


def solve_without_alice(R: Referee, delta: float, **kwargs) -> BestResponse:
    """Game value when Alice has no turns: Bob's best response to the start state."""
    if R.a != 0:
        raise ValidationError("solve_without_alice needs a = 0")
    return best_response(R, qmath.ket_to_density(R.psi), delta / 2, **kwargs)


# ---------------------------------------------------------------------------
# Mixtures


def _prep_unitary(weights: np.ndarray) -> np.ndarray:
    """Real Householder reflection taking |0> to ``sum_t sqrt(w_t) |t>``."""
    k = len(weights)
    v = np.sqrt(np.clip(weights, 0.0, None))
    e0 = np.zeros(k)
    e0[0] = 1.0
    u = e0 - v
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return np.eye(k)
    u = u / nu
    return np.eye(k) - 2.0 * np.outer(u, u)


def _controlled(d_C: int, d_B: int, unitaries: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_t |t><t|_K ⊗ U_t`` on C⊗K⊗B, with each ``U_t`` on C⊗B."""
    k = len(unitaries)
    out = np.zeros((d_C, k, d_B, d_C, k, d_B), dtype=complex)
    for t, U in enumerate(unitaries):
        out[:, t, :, :, t, :] = U.reshape(d_C, d_B, d_C, d_B)
    n = d_C * k * d_B
    return out.reshape(n, n)


def mix_bob(strategies: Sequence[UnitaryStrategy], weights: Sequence[float], d_C: int) -> UnitaryStrategy:
    """A single strategy whose measurement operator is the weighted mixture.

    The private register becomes ``K ⊗ B`` with a control K prepared in
    ``sum_t sqrt(w_t) |t>`` during the first turn; every turn then applies
    strategy ``t``'s unitary conditioned on K.
    """
    strategies = list(strategies)
    w = np.asarray(weights, dtype=float)
    if len(strategies) == 0 or len(w) != len(strategies):
        raise ValidationError("need one weight per strategy")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError("weights must be a probability vector")
    d_B = strategies[0].private_dim
    b = len(strategies[0].U_list)
    for s in strategies:
        if s.private_dim != d_B or len(s.U_list) != b:
            raise ValidationError("strategies must share private dimension and turn count")
        s.check(d_C, b, "mix_bob")
    if b == 0:
        return UnitaryStrategy(d_B, (), approximate=any(s.approximate for s in strategies))
    k = len(strategies)
    prep = np.kron(np.kron(np.eye(d_C), _prep_unitary(w)), np.eye(d_B))
    U_list = []
    for j in range(b):
        C = _controlled(d_C, d_B, [s.U_list[j] for s in strategies])
        U_list.append(C @ prep if j == 0 else C)
    return UnitaryStrategy(k * d_B, tuple(U_list), approximate=any(s.approximate for s in strategies))


def evenly_spaced(T: int, k: int = DEFAULT_MIX_SIZE) -> list:
    """``k`` iteration indices spread evenly over ``0..T-1``."""
    k = max(1, min(k, T))
    return sorted({int(round(x)) for x in np.linspace(0, T - 1, k)})


def mix_iterates(
    result: SolveResult, d_C: int, k: int = DEFAULT_MIX_SIZE, exact_limit: int = 32
) -> UnitaryStrategy:
    """Bob strategy realising the solve's averaged measurement operator.

    Iterations that share a strategy object are merged. If at most
    ``exact_limit`` distinct strategies remain the mixture over all
    iterations is built, whose measurement operator is the average of the
    iterates' operators. Otherwise ``k`` evenly spaced iterations are mixed
    uniformly and the result is flagged approximate.
    """
    payloads = result.oracle_payloads
    if not payloads:
        raise ValidationError("the solve kept no oracle payloads (use keep_payloads=True)")
    counts: dict[int, list] = {}
    for p in payloads:
        entry = counts.setdefault(id(p["bob"]), [p["bob"], 0])
        entry[1] += 1
    if len(counts) <= exact_limit:
        strategies = [v[0] for v in counts.values()]
        w = np.array([v[1] for v in counts.values()], dtype=float)
        w = w / w.sum()
        return mix_bob(strategies, w, d_C)
    idx = evenly_spaced(len(payloads), k)
    strategies = [payloads[i]["bob"] for i in idx]
    mixed = mix_bob(strategies, np.full(len(strategies), 1.0 / len(strategies)), d_C)
    return UnitaryStrategy(mixed.private_dim, mixed.U_list, approximate=True)


def certified_bracket(R: Referee, result: SolveResult, tol: float = 0.05, **kwargs) -> tuple:
    """``(lower, upper)`` with ``lower <= value(R) <= upper``.

    The lower end is the solve's dual bound. The upper end is Bob's certified
    best response to the rounded (consistent) final snapshot, which Alice can
    realise exactly.
    """
    rho = result.rounded_transcript.states[-1]
    br = best_response(R, rho, tol, **kwargs)
    return result.lower_bound, br.value + br.error_bound
