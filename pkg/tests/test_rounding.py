import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_mmw import game, qmath, rounding
from minimax_mmw.game import Transcript, ValidationError
from minimax_mmw.rounding import PenaltyCertificate

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.sampled_from([(1, 2), (2, 1), (2, 2), (2, 3), (3, 2), (2, 4), (4, 2)])


def _random_transcript(rng, R):
    return Transcript(tuple(qmath.random_density(rng, R.D, int(rng.integers(1, R.D + 1))) for _ in range(R.a)))


@settings(max_examples=40, deadline=None)
@given(seeds, dims, st.integers(1, 3))
def test_rounding_is_consistent_and_obeys_bounds(seed, d, a):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, d[0], d[1], a, 1)
    t = _random_transcript(rng, R)
    r = rounding.round_to_consistent(R, t)
    assert max(game.consistency_residuals(R, r)) <= 1e-6
    assert all(qmath.is_density(X) for X in r.states)
    b = rounding.rounding_bounds(R, t, r)
    assert b["angle"] <= b["angle_bound"] + 1e-6
    for eps in (0.1, 0.3):
        assert b["trace_distance"] < eps + (a / eps) * b["residual_sum"] + 1e-6


@settings(max_examples=30, deadline=None)
@given(seeds, dims, st.integers(1, 3))
def test_rounding_follows_the_recursive_construction(seed, d, a):
    """Each rounded slot has the fidelity of its marginal correction."""
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, d[0], d[1], a, 0)
    t = _random_transcript(rng, R)
    r = rounding.round_to_consistent(R, t)
    prev = qmath.ket_to_density(R.psi)
    for i in range(a):
        Vi = R.V(i)
        target = R.tr_C(Vi @ prev @ qmath.dag(Vi))
        np.testing.assert_allclose(R.tr_C(r.states[i]), target, atol=1e-8)
        F_marg = qmath.fidelity(R.tr_C(t.states[i]), target)
        assert qmath.fidelity(t.states[i], r.states[i]) == pytest.approx(F_marg, abs=1e-7)
        prev = r.states[i]


def test_rounding_leaves_consistent_transcripts_alone():
    rng = np.random.default_rng(0)
    R = game.random_referee(2, 2, 2, 2, 1)
    alice = game.UnitaryStrategy(2, tuple(qmath.haar_unitary(rng, 4) for _ in range(2)))
    t = game.transcript_of(R, alice)
    r = rounding.round_to_consistent(R, t)
    for X, Y in zip(t.states, r.states):
        assert qmath.trace_distance(X, Y) < 1e-7


def test_rounding_rejects_wrong_length():
    R = game.random_referee(0, 2, 2, 2, 0)
    with pytest.raises(ValidationError):
        rounding.round_to_consistent(R, Transcript((np.eye(4) / 4,)))


def test_mu_payoff_on_consistent_transcript_ignores_penalties():
    rng = np.random.default_rng(3)
    R = game.random_referee(3, 2, 2, 2, 1)
    alice = game.UnitaryStrategy(1, tuple(qmath.haar_unitary(rng, 2) for _ in range(2)))
    t = game.transcript_of(R, alice)
    P = qmath.random_measurement(rng, 4)
    cert = PenaltyCertificate(P, tuple(qmath.random_measurement(rng, 2) for _ in range(2)), 0.1)
    assert rounding.mu_payoff(R, t, cert) == pytest.approx(np.real(np.vdot(t.states[-1], P)), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 3))
def test_best_penalty_cert_maximises_payoff(seed, a):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, 2, 2, a, 1)
    t = _random_transcript(rng, R)
    P = qmath.random_measurement(rng, 4)
    best = rounding.mu_payoff(R, t, rounding.best_penalty_cert(R, t, P, 0.1))
    assert best >= np.real(np.vdot(t.states[-1], P)) - 1e-12
    for _ in range(10):
        cert = PenaltyCertificate(P, tuple(qmath.random_measurement(rng, 2) for _ in range(a)), 0.1)
        assert rounding.mu_payoff(R, t, cert) <= best + 1e-9


def test_penalty_certificate_validation():
    with pytest.raises(ValidationError):
        PenaltyCertificate(2 * np.eye(2), (), 0.1)
    with pytest.raises(ValidationError):
        PenaltyCertificate(np.eye(2), (), 0.0)
    R = game.random_referee(0, 2, 2, 2, 0)
    cert = PenaltyCertificate(np.eye(4), (np.eye(2),), 0.1)
    with pytest.raises(ValidationError):
        rounding.mu_payoff(R, Transcript((np.eye(4) / 4,) * 2), cert)
