"""Transcript-constrained semidefinite programs.

The program is

    minimise <X_n, P>  over densities X_1..X_n
    subject to tr_{C_1} X_1 = Q,  tr_{C_{i+1}} X_{i+1} = Phi_i(X_i),

with each ``Phi_i`` a channel given by Kraus operators. Variable ``X_i``
lives on ``C_i ⊗ R_i``; the constraint spaces ``R_i`` may differ per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import qmath
from .chain import ConsistencyChain, kraus_chain
from .game import Referee, ValidationError
from .mmw import PRACTICAL, Schedule, SolveResult, run_chain
from .qmath import TAU_CHK, dag


@dataclass(frozen=True, eq=False)
class ChannelKraus:
    d_in: int
    d_out: int
    kraus: tuple

    def __post_init__(self):
        ks = tuple(np.asarray(K, dtype=complex) for K in self.kraus)
        object.__setattr__(self, "kraus", ks)
        if not ks:
            raise ValidationError("a channel needs at least one Kraus operator")
        for j, K in enumerate(ks):
            if K.shape != (self.d_out, self.d_in):
                raise ValidationError(f"kraus[{j}] has shape {K.shape}, expected {(self.d_out, self.d_in)}")
        S = sum(dag(K) @ K for K in ks)
        if np.linalg.norm(S - np.eye(self.d_in), 2) > TAU_CHK:
            raise ValidationError("Kraus operators are not trace preserving")

    @classmethod
    def unitary(cls, U: np.ndarray) -> "ChannelKraus":
        U = np.asarray(U, dtype=complex)
        return cls(U.shape[1], U.shape[0], (U,))

    @classmethod
    def identity(cls, d: int) -> "ChannelKraus":
        return cls(d, d, (np.eye(d),))


def apply_channel(phi: ChannelKraus, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.shape != (phi.d_in, phi.d_in):
        raise ValidationError(f"channel input must be {phi.d_in}x{phi.d_in}, got {X.shape}")
    return sum(K @ X @ dag(K) for K in phi.kraus)


def adjoint_channel(phi: ChannelKraus, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.shape != (phi.d_out, phi.d_out):
        raise ValidationError(f"adjoint input must be {phi.d_out}x{phi.d_out}, got {Y.shape}")
    return sum(dag(K) @ Y @ K for K in phi.kraus)


@dataclass(frozen=True, eq=False)
class SdpInstance:
    traced_dims: tuple
    residual_dims: tuple
    channels: tuple
    Q: np.ndarray
    P: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "traced_dims", tuple(int(c) for c in self.traced_dims))
        object.__setattr__(self, "residual_dims", tuple(int(r) for r in self.residual_dims))
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=complex))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=complex))
        n = len(self.traced_dims)
        if n < 1 or len(self.residual_dims) != n:
            raise ValidationError("need n >= 1 steps with one constraint space each")
        if any(d < 1 for d in self.traced_dims + self.residual_dims):
            raise ValidationError("dimensions must be >= 1")
        if len(self.channels) != n - 1:
            raise ValidationError(f"need {n - 1} channels, got {len(self.channels)}")
        dims = self.var_dims
        for i, ch in enumerate(self.channels):
            if ch.d_in != dims[i] or ch.d_out != self.residual_dims[i + 1]:
                raise ValidationError(
                    f"channels[{i}] maps {ch.d_in} -> {ch.d_out}, expected {dims[i]} -> {self.residual_dims[i + 1]}"
                )
        r0 = self.residual_dims[0]
        if self.Q.shape != (r0, r0) or not qmath.is_psd(self.Q):
            raise ValidationError(f"Q must be a {r0}x{r0} positive semidefinite matrix")
        if abs(np.trace(self.Q).real - 1.0) > TAU_CHK:
            raise ValidationError("tr Q must be 1 (rescale with normalize_Q)")
        if self.P.shape != (dims[-1], dims[-1]) or not qmath.is_measurement(self.P):
            raise ValidationError(f"P must be a {dims[-1]}x{dims[-1]} measurement operator")

    @property
    def n(self) -> int:
        return len(self.traced_dims)

    @property
    def var_dims(self) -> tuple:
        return tuple(c * r for c, r in zip(self.traced_dims, self.residual_dims))

    def chain(self) -> ConsistencyChain:
        return kraus_chain(self.traced_dims, self.residual_dims, self.Q, [ch.kraus for ch in self.channels])

    def objective(self, X_last: np.ndarray) -> float:
        return float(np.real(np.vdot(X_last, self.P)))


def normalize_Q(Q: np.ndarray):
    """``(Q / tr Q, tr Q)``; the optimum of the original program is ``factor`` times the normalised one."""
    Q = np.asarray(Q, dtype=complex)
    tr = float(np.trace(Q).real)
    if tr <= 0:
        raise ValidationError("tr Q must be positive")
    return Q / tr, tr


def _certifier(chain: ConsistencyChain, P: np.ndarray):
    def certify(avg_states, avg_P, lower):
        rounded = chain.round(avg_states)
        return float(np.real(np.vdot(rounded[-1], P))) - lower

    return certify


def solve_sdp(inst: SdpInstance, sched: Schedule, certified_stop: bool = False, **kwargs) -> SolveResult:
    """MMW solve against the constant best response ``P``.

    ``lambda_tilde`` estimates the optimum. The rounded average is exactly
    feasible, so ``rounded_value`` is an upper bound and ``lower_bound`` a
    lower bound on it. With ``certified_stop`` a practical run stops once
    these two are within delta/2 (``lambda_tilde`` may then still be far off).
    """
    chain = inst.chain()
    P = 0.5 * (inst.P + dag(inst.P))

    def oracle(_rho, _acc):
        return P, None

    certify = _certifier(chain, P) if certified_stop and sched.mode == PRACTICAL else None
    return run_chain(chain, oracle, sched, certify=certify, **kwargs)


def game_to_sdp(R: Referee) -> SdpInstance:
    """The transcript program of a referee without Bob turns."""
    if R.b != 0:
        raise ValidationError(f"game_to_sdp needs b = 0, referee has b = {R.b}")
    if R.a < 1:
        raise ValidationError("game_to_sdp needs a >= 1")
    dC, dV = R.d_C, R.d_V
    channels = []
    for i in range(1, R.a):
        Vi = R.V(i)
        ks = tuple(Vi.reshape(dC, dV, dC * dV)[c] for c in range(dC))
        channels.append(ChannelKraus(R.D, dV, ks))
    Va = R.V(R.a)
    P = dag(Va) @ R.Pi @ Va
    return SdpInstance(
        (dC,) * R.a,
        (dV,) * R.a,
        tuple(channels),
        R.initial_marginal,
        0.5 * (P + dag(P)),
        name=f"{R.name}-sdp" if R.name else "",
    )


def random_channel(rng: np.random.Generator, d_in: int, d_out: int, n_kraus: int = 2) -> ChannelKraus:
    """Kraus operators cut from a Haar isometry."""
    k = n_kraus
    d = max(d_out * k, d_in)
    U = qmath.haar_unitary(rng, d)[: d_out * k, :d_in]
    if d_out * k < d_in:
        raise ValueError("need n_kraus * d_out >= d_in")
    return ChannelKraus(d_in, d_out, tuple(U.reshape(k, d_out, d_in)))


def random_instance(
    seed: int,
    traced_dims: Sequence[int],
    residual_dims: Sequence[int],
    n_kraus: int = 2,
    P: Optional[np.ndarray] = None,
) -> SdpInstance:
    rng = np.random.default_rng(seed)
    n = len(traced_dims)
    dims = [c * r for c, r in zip(traced_dims, residual_dims)]
    channels = []
    for i in range(n - 1):
        k = max(n_kraus, -(-dims[i] // residual_dims[i + 1]))
        channels.append(random_channel(rng, dims[i], residual_dims[i + 1], k))
    Q = qmath.random_density(rng, residual_dims[0])
    if P is None:
        P = qmath.random_measurement(rng, dims[-1])
    return SdpInstance(tuple(traced_dims), tuple(residual_dims), tuple(channels), Q, P, name=f"random-sdp-{seed}")
