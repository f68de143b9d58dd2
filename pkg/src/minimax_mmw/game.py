"""Referees, strategies and transcripts of double quantum interactive proofs.

Register order is always ``C, V`` followed by a player's private register.
The referee talks to Alice for ``a`` turns and then to Bob for ``b`` turns;
Bob wins on the measurement outcome ``Pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import qmath
from .qmath import TAU_CHK, dag


class ValidationError(ValueError):
    """An input object violates its documented invariants."""


@dataclass(frozen=True, eq=False)
class Referee:
    d_C: int
    d_V: int
    a: int
    b: int
    psi: np.ndarray
    V_list: tuple
    Pi: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=complex).ravel())
        object.__setattr__(self, "V_list", tuple(np.asarray(V, dtype=complex) for V in self.V_list))
        object.__setattr__(self, "Pi", np.asarray(self.Pi, dtype=complex))
        D = self.d_C * self.d_V
        if self.d_C < 1 or self.d_V < 1 or self.a < 0 or self.b < 0:
            raise ValidationError("dimensions must be >= 1 and turn counts >= 0")
        if self.psi.shape != (D,):
            raise ValidationError(f"psi: expected length {D}, got {self.psi.shape}")
        if abs(np.linalg.norm(self.psi) - 1.0) > TAU_CHK:
            raise ValidationError(f"psi: not normalised (norm {np.linalg.norm(self.psi):.12g})")
        if len(self.V_list) != self.a + self.b:
            raise ValidationError(f"V_list: expected {self.a + self.b} unitaries, got {len(self.V_list)}")
        for i, V in enumerate(self.V_list):
            if V.shape != (D, D) or not qmath.is_unitary(V):
                raise ValidationError(f"V_list[{i}] (V_{i + 1}): not a {D}x{D} unitary")
        if self.Pi.shape != (D, D) or not qmath.is_measurement(self.Pi):
            raise ValidationError(f"Pi: not a {D}x{D} measurement operator 0 <= Pi <= I")

    @property
    def D(self) -> int:
        return self.d_C * self.d_V

    @property
    def is_projective(self) -> bool:
        return qmath.is_projector(self.Pi)

    @property
    def shape(self) -> qmath.SpaceShape:
        return qmath.SpaceShape.of(C=self.d_C, V=self.d_V)

    def V(self, i: int) -> np.ndarray:
        """Referee unitary ``V_i`` with the convention ``V_0 = I``."""
        if i == 0:
            return np.eye(self.D, dtype=complex)
        return self.V_list[i - 1]

    def tr_C(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("cvcw->vw", rho.reshape(self.d_C, self.d_V, self.d_C, self.d_V))

    def lift_V(self, Y: np.ndarray) -> np.ndarray:
        """``I_C ⊗ Y`` for an operator Y on V."""
        return np.kron(np.eye(self.d_C), Y)

    @property
    def initial_marginal(self) -> np.ndarray:
        return self.tr_C(qmath.ket_to_density(self.psi))


@dataclass(frozen=True, eq=False)
class UnitaryStrategy:
    """A player's unitaries, each acting on ``C ⊗ private``."""

    private_dim: int
    U_list: tuple = field(default_factory=tuple)
    approximate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "U_list", tuple(np.asarray(U, dtype=complex) for U in self.U_list))
        if self.private_dim < 1:
            raise ValidationError("private_dim must be >= 1")

    def check(self, d_C: int, turns: int, who: str = "strategy") -> None:
        if len(self.U_list) != turns:
            raise ValidationError(f"{who}: expected {turns} unitaries, got {len(self.U_list)}")
        n = d_C * self.private_dim
        for i, U in enumerate(self.U_list):
            if U.shape != (n, n) or not qmath.is_unitary(U):
                raise ValidationError(f"{who}.U_list[{i}]: not a {n}x{n} unitary")


@dataclass(frozen=True, eq=False)
class Transcript:
    """Snapshots ``rho_1..rho_a`` of the referee's registers after each of Alice's turns."""

    states: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(np.asarray(s, dtype=complex) for s in self.states))

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]


@dataclass(frozen=True, eq=False)
class PayoffObservable:
    labels: tuple
    projectors: tuple
    payouts: tuple

    def __post_init__(self):
        object.__setattr__(self, "projectors", tuple(np.asarray(p, dtype=complex) for p in self.projectors))
        object.__setattr__(self, "payouts", tuple(float(v) for v in self.payouts))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not (len(self.labels) == len(self.projectors) == len(self.payouts)) or not self.labels:
            raise ValidationError("labels, projectors and payouts must be non-empty and equally long")
        d = self.projectors[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for lab, P in zip(self.labels, self.projectors):
            if not qmath.is_projector(P):
                raise ValidationError(f"projector for outcome {lab!r} is not a projector")
            total += P
        if np.linalg.norm(total - np.eye(d), 2) > TAU_CHK:
            raise ValidationError("outcome projectors do not sum to the identity")
        for i in range(len(self.projectors)):
            for j in range(i + 1, len(self.projectors)):
                if np.linalg.norm(self.projectors[i] @ self.projectors[j], 2) > TAU_CHK:
                    raise ValidationError(f"projectors {self.labels[i]!r} and {self.labels[j]!r} overlap")

    def observable(self) -> np.ndarray:
        return sum(v * P for v, P in zip(self.payouts, self.projectors))


class RescaledPayoff(NamedTuple):
    Pi: np.ndarray
    scale: float
    offset: float
    error_inflation: float


def rescale_payoff(obs: PayoffObservable) -> RescaledPayoff:
    """Affinely map a payout observable onto a measurement operator.

    The payouts are read as Bob's payouts, so the rescaled operator plays the
    role of Bob's victory outcome. The expected payout of the original game
    is ``scale * value + offset``; approximation errors grow by
    ``error_inflation`` (the largest absolute payout).
    """
    obs_op = obs.observable()
    d = obs_op.shape[0]
    lo, hi = min(obs.payouts), max(obs.payouts)
    inflation = max(abs(v) for v in obs.payouts)
    if hi == lo:
        return RescaledPayoff(np.zeros((d, d), dtype=complex), 1.0, lo, inflation)
    Pi = (obs_op - lo * np.eye(d)) / (hi - lo)
    return RescaledPayoff(Pi, hi - lo, lo, inflation)


# ---------------------------------------------------------------------------
# Simulation


def _apply_local(state: np.ndarray, U: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply U to the given tensor axes of a state tensor."""
    dims = [state.shape[ax] for ax in axes]
    k = len(axes)
    Ut = U.reshape(dims + dims)
    moved = np.tensordot(Ut, state, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(moved, list(range(k)), list(axes))


def _check_lengths(R: Referee, alice: UnitaryStrategy | None, bob: UnitaryStrategy | None):
    if alice is not None:
        alice.check(R.d_C, R.a, "alice")
    if bob is not None:
        bob.check(R.d_C, R.b, "bob")


def _alice_state(R: Referee, alice: UnitaryStrategy, keep_snapshots: bool = False):
    d_A = alice.private_dim
    state = np.zeros((R.d_C, R.d_V, d_A), dtype=complex)
    state[:, :, 0] = R.psi.reshape(R.d_C, R.d_V)
    snaps = []
    for i in range(R.a):
        if i > 0:
            state = _apply_local(state, R.V(i), (0, 1))
        state = _apply_local(state, alice.U_list[i], (0, 2))
        if keep_snapshots:
            flat = state.reshape(R.D, d_A)
            snaps.append(flat @ dag(flat))
    return state, snaps


def win_probability(R: Referee, alice: UnitaryStrategy, bob: UnitaryStrategy) -> float:
    """Bob's probability of victory, by state-vector evolution on C⊗V⊗A⊗B."""
    _check_lengths(R, alice, bob)
    state, _ = _alice_state(R, alice)
    d_B = bob.private_dim
    full = np.zeros(state.shape + (d_B,), dtype=complex)
    full[..., 0] = state
    for j in range(R.b):
        full = _apply_local(full, R.V(R.a + j), (0, 1))
        full = _apply_local(full, bob.U_list[j], (0, 3))
    full = _apply_local(full, R.V(R.a + R.b), (0, 1))
    flat = full.reshape(R.D, -1)
    return float(np.real(np.vdot(flat, R.Pi @ flat)))


def transcript_of(R: Referee, alice: UnitaryStrategy) -> Transcript:
    _check_lengths(R, alice, None)
    _, snaps = _alice_state(R, alice, keep_snapshots=True)
    return Transcript(tuple(snaps))


def residual_operators(R: Referee, states: Sequence[np.ndarray]) -> list:
    """``tr_C rho_{i+1} - tr_C(V_i rho_i V_i^*)`` for i = 0..a-1 (rho_0 = |psi><psi|)."""
    if len(states) != R.a:
        raise ValidationError(f"transcript has {len(states)} states, referee expects {R.a}")
    out = []
    prev = qmath.ket_to_density(R.psi)
    for i in range(R.a):
        Vi = R.V(i)
        out.append(R.tr_C(states[i]) - R.tr_C(Vi @ prev @ dag(Vi)))
        prev = states[i]
    return out


def consistency_residuals(R: Referee, t: Transcript) -> list:
    return [0.5 * qmath.trace_norm(X) for X in residual_operators(R, t.states)]


def bob_evolution(R: Referee, bob: UnitaryStrategy) -> np.ndarray:
    """The isometry ``U (I_CV ⊗ |0_B>)`` from C⊗V into C⊗V⊗B, U = V_{a+b} B_b ... B_1 V_a."""
    _check_lengths(R, None, bob)
    d_B = bob.private_dim
    # columns: basis inputs on CV; tensor axes (C, V, B, input)
    X = np.zeros((R.d_C, R.d_V, d_B, R.D), dtype=complex)
    X[:, :, 0, :] = R.V(R.a).reshape(R.d_C, R.d_V, R.D)
    for j in range(R.b):
        X = _apply_local(X, bob.U_list[j], (0, 2))
        X = _apply_local(X, R.V(R.a + j + 1), (0, 1))
    return X.reshape(R.D * d_B, R.D)


def bob_measurement(R: Referee, bob: UnitaryStrategy) -> np.ndarray:
    """Measurement operator P on C⊗V with ``<rho, P>`` equal to Bob's win probability."""
    X = bob_evolution(R, bob)
    PiB = np.kron(R.Pi, np.eye(bob.private_dim))
    P = dag(X) @ PiB @ X
    return 0.5 * (P + dag(P))


# ---------------------------------------------------------------------------
# Instances


def random_referee(seed: int, d_C: int, d_V: int, a: int, b: int) -> Referee:
    rng = np.random.default_rng(seed)
    D = d_C * d_V
    psi = qmath.random_ket(rng, D)
    V_list = tuple(qmath.haar_unitary(rng, D) for _ in range(a + b))
    rank = int(rng.integers(1, D)) if D > 1 else 1
    Pi = qmath.random_projector(rng, D, rank)
    return Referee(d_C, d_V, a, b, psi, V_list, Pi, name=f"random-{seed}")


def _swap(d: int) -> np.ndarray:
    S = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            S[j * d + i, i * d + j] = 1.0
    return S


def matching_pennies() -> Referee:
    """Alice's bit is stored in V, Bob writes a bit into C, Bob wins iff they agree."""
    psi = np.array([1, 0, 0, 0], dtype=complex)
    Pi = np.diag([1.0, 0.0, 0.0, 1.0]).astype(complex)
    return Referee(2, 2, 1, 1, psi, (_swap(2), np.eye(4)), Pi, name="matching-pennies")


def bob_always_wins(d_C: int = 2, d_V: int = 2, a: int = 1, b: int = 1, seed: int = 0) -> Referee:
    R = random_referee(seed, d_C, d_V, a, b)
    return Referee(d_C, d_V, a, b, R.psi, R.V_list, np.eye(d_C * d_V), name="bob-always-wins")


def b0_expectation(seed: int, d_C: int = 2, d_V: int = 2, a: int = 1) -> Referee:
    """``b = 0`` referee with trivial unitaries and ``Pi = I_C ⊗ Pi_V``.

    Alice cannot touch V, so the value is ``<psi| I_C ⊗ Pi_V |psi>``.
    """
    rng = np.random.default_rng(seed)
    psi = qmath.random_ket(rng, d_C * d_V)
    rank = int(rng.integers(1, d_V)) if d_V > 1 else 1
    Pi_V = qmath.random_projector(rng, d_V, rank)
    V_list = tuple(np.eye(d_C * d_V) for _ in range(a))
    return Referee(d_C, d_V, a, 0, psi, V_list, np.kron(np.eye(d_C), Pi_V), name=f"b0-expectation-{seed}")


def b0_expected_value(R: Referee) -> float:
    return float(np.real(np.vdot(R.psi, R.Pi @ R.psi)))
