"""Penalised relaxation of the game value and rounding to consistent transcripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qmath
from .chain import referee_chain
from .game import Referee, Transcript, ValidationError, consistency_residuals, residual_operators


@dataclass(frozen=True, eq=False)
class PenaltyCertificate:
    """Bob's side of the relaxed game: a measurement on C⊗V and one on V per turn."""

    P: np.ndarray
    Pi_list: tuple
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=complex))
        object.__setattr__(self, "Pi_list", tuple(np.asarray(X, dtype=complex) for X in self.Pi_list))
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if not qmath.is_measurement(self.P):
            raise ValidationError("P is not a measurement operator")
        for i, X in enumerate(self.Pi_list):
            if not qmath.is_measurement(X):
                raise ValidationError(f"Pi_list[{i}] is not a measurement operator")


def mu_payoff(R: Referee, t: Transcript, cert: PenaltyCertificate) -> float:
    """``<rho_a, P> + (a/eps) sum_i <residual_i, Pi_{i+1}>``."""
    if len(cert.Pi_list) != R.a:
        raise ValidationError(f"certificate has {len(cert.Pi_list)} penalty operators, expected {R.a}")
    res = residual_operators(R, t.states)
    value = float(np.real(np.vdot(t.states[-1], cert.P)))
    pen = sum(float(np.real(np.vdot(Z, Pi))) for Z, Pi in zip(res, cert.Pi_list))
    return value + R.a / cert.epsilon * pen


def best_penalty_cert(R: Referee, t: Transcript, P: np.ndarray, eps: float) -> PenaltyCertificate:
    """Penalty operators maximising the penalty part of :func:`mu_payoff`."""
    res = residual_operators(R, t.states)
    return PenaltyCertificate(P, tuple(qmath.positive_eigenprojector(qmath._herm(Z)) for Z in res), eps)


def round_to_consistent(R: Referee, t: Transcript) -> Transcript:
    """Closest-in-fidelity consistent transcript, built turn by turn.

    At turn ``i`` the marginal on V is replaced by the one forced by the
    previous rounded state and the change is extended to C⊗V at equal
    fidelity.
    """
    if len(t) != R.a:
        raise ValidationError(f"transcript has {len(t)} states, referee expects {R.a}")
    return Transcript(tuple(referee_chain(R).round(list(t.states))))


def rounding_bounds(R: Referee, t: Transcript, rounded: Transcript) -> dict:
    """Both sides of the rounding guarantees for a transcript and its rounding.

    ``angle`` is the Bures angle between the final states, ``angle_bound``
    the sum of marginal angles that bounds it. ``trace_distance`` is half
    the trace norm between final states; ``residual_sum`` the sum of
    consistency residuals of ``t``.
    """
    psi = qmath.ket_to_density(R.psi)
    angles = []
    prev = psi
    for i in range(R.a):
        Vi = R.V(i)
        target = qmath.clean_density(R.tr_C(Vi @ prev @ qmath.dag(Vi)))
        angles.append(qmath.bures_angle(qmath.clean_density(R.tr_C(t.states[i])), target))
        prev = qmath.clean_density(t.states[i])
    return {
        "angle": qmath.bures_angle(qmath.clean_density(t.states[-1]), rounded.states[-1]),
        "angle_bound": float(sum(angles)),
        "trace_distance": qmath.trace_distance(t.states[-1], rounded.states[-1]),
        "residual_sum": float(sum(consistency_residuals(R, t))),
    }
