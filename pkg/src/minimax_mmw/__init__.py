"""Approximate values and strategies of double quantum interactive proofs by matrix multiplicative weights."""

from .game import (
    PayoffObservable,
    Referee,
    Transcript,
    UnitaryStrategy,
    ValidationError,
    bob_measurement,
    consistency_residuals,
    matching_pennies,
    random_referee,
    rescale_payoff,
    transcript_of,
    win_probability,
)
from .mmw import (
    InvariantViolation,
    Schedule,
    ScheduleError,
    SolveResult,
    error_budget,
    f_adjoint,
    f_map,
    loss_tuple,
    mmw_weights,
    solve_lambda,
)
from .oracle import (
    BestResponseOracle,
    PrimedReferee,
    extract_alice,
    mix_bob,
    recover_unitaries,
    singleton_oracle,
    weak_optimize,
)
from .rounding import PenaltyCertificate, best_penalty_cert, mu_payoff, round_to_consistent
from .sdpfront import ChannelKraus, SdpInstance, adjoint_channel, apply_channel, game_to_sdp, solve_sdp

__version__ = "0.1.0"

__all__ = [
    "adjoint_channel",
    "apply_channel",
    "best_penalty_cert",
    "BestResponseOracle",
    "bob_measurement",
    "ChannelKraus",
    "consistency_residuals",
    "error_budget",
    "extract_alice",
    "f_adjoint",
    "f_map",
    "game_to_sdp",
    "InvariantViolation",
    "loss_tuple",
    "matching_pennies",
    "mix_bob",
    "mmw_weights",
    "mu_payoff",
    "PayoffObservable",
    "PenaltyCertificate",
    "PrimedReferee",
    "random_referee",
    "recover_unitaries",
    "Referee",
    "rescale_payoff",
    "round_to_consistent",
    "Schedule",
    "ScheduleError",
    "SdpInstance",
    "singleton_oracle",
    "solve_lambda",
    "solve_sdp",
    "SolveResult",
    "Transcript",
    "transcript_of",
    "UnitaryStrategy",
    "ValidationError",
    "weak_optimize",
    "win_probability",
]
