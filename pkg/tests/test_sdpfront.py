import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_mmw import game, mmw, qmath
from minimax_mmw import sdpfront as sf
from minimax_mmw.game import ValidationError

from oracles import sdp_optimum

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_channel_validation():
    sf.ChannelKraus.identity(3)
    with pytest.raises(ValidationError, match="trace preserving"):
        sf.ChannelKraus(2, 2, (0.5 * np.eye(2),))
    with pytest.raises(ValidationError, match="shape"):
        sf.ChannelKraus(2, 2, (np.eye(3),))
    with pytest.raises(ValidationError):
        sf.ChannelKraus(2, 2, ())


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_channel_and_adjoint_are_dual(seed, d_in, d_out, k):
    rng = np.random.default_rng(seed)
    k = max(k, -(-d_in // d_out))
    phi = sf.random_channel(rng, d_in, d_out, k)
    X = qmath.random_density(rng, d_in)
    Y = qmath.random_measurement(rng, d_out)
    out = sf.apply_channel(phi, X)
    assert qmath.is_density(out)
    assert np.vdot(out, Y) == pytest.approx(np.vdot(X, sf.adjoint_channel(phi, Y)), abs=1e-10)
    np.testing.assert_allclose(sf.adjoint_channel(phi, np.eye(d_out)), np.eye(d_in), atol=1e-10)


def test_apply_channel_rejects_shape():
    with pytest.raises(ValidationError):
        sf.apply_channel(sf.ChannelKraus.identity(2), np.eye(3))


def test_instance_validation():
    Q = np.eye(2) / 2
    ok = sf.SdpInstance((2,), (2,), (), Q, np.eye(4) / 2)
    assert ok.n == 1 and ok.var_dims == (4,)
    with pytest.raises(ValidationError, match="tr Q"):
        sf.SdpInstance((2,), (2,), (), 2 * Q, np.eye(4) / 2)
    with pytest.raises(ValidationError, match="channels"):
        sf.SdpInstance((2, 2), (2, 2), (), Q, np.eye(4) / 2)
    with pytest.raises(ValidationError, match="P must"):
        sf.SdpInstance((2,), (2,), (), Q, 2 * np.eye(4))


def test_normalize_Q():
    Qn, f = sf.normalize_Q(np.diag([2.0, 1.0]))
    assert f == pytest.approx(3.0)
    np.testing.assert_allclose(Qn, np.diag([2 / 3, 1 / 3]))
    with pytest.raises(ValidationError):
        sf.normalize_Q(np.zeros((2, 2)))


def test_single_step_program_is_a_min_eigenvalue_problem():
    """One step with Q = I/2: a diagonal P gives a hand-computable optimum."""
    pytest.importorskip("cvxpy")
    P = np.diag([0.1, 0.9, 0.5, 0.3])
    inst = sf.SdpInstance((2,), (2,), (), np.eye(2) / 2, P)
    # X = diag(x00, x01, x10, x11) with x00 + x10 = x01 + x11 = 1/2: optimum 0.5*(0.1 + 0.3)
    assert sdp_optimum(inst) == pytest.approx(0.2, abs=1e-6)
    res = sf.solve_sdp(inst, mmw.Schedule.practical(0.2, 1, 4))
    assert res.lower_bound <= 0.2 + 1e-9 <= res.rounded_value + 2e-9
    assert abs(res.lambda_tilde - 0.2) <= 0.2


@pytest.mark.parametrize("seed", range(3))
def test_solve_sdp_brackets_conic_optimum(seed):
    pytest.importorskip("cvxpy")
    inst = sf.random_instance(seed, (2, 2), (2, 2))
    opt = sdp_optimum(inst)
    res = sf.solve_sdp(inst, mmw.Schedule.practical(0.2, inst.n, max(inst.var_dims)))
    assert res.lower_bound <= opt + 1e-6
    assert res.rounded_value >= opt - 1e-6
    assert max(res.rounded_residuals) <= 1e-6
    assert abs(res.lambda_tilde - opt) <= 0.2


def test_certified_stop_gives_tight_bracket():
    inst = sf.random_instance(7, (2,), (2,))
    res = sf.solve_sdp(inst, mmw.Schedule.practical(0.2, 1, 4), certified_stop=True)
    assert res.rounded_value - res.lower_bound <= 0.1 + 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(1, 3))
def test_game_to_sdp_matches_game_transcripts(seed, a):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, 2, 2, a, 0)
    inst = sf.game_to_sdp(R)
    alice = game.UnitaryStrategy(2, tuple(qmath.haar_unitary(rng, 4) for _ in range(a)))
    t = game.transcript_of(R, alice)
    chain = inst.chain()
    assert max(chain.residual_norms(list(t.states))) < 1e-10
    bob = game.UnitaryStrategy(1, ())
    assert inst.objective(t.states[-1]) == pytest.approx(game.win_probability(R, alice, bob), abs=1e-10)


def test_game_to_sdp_b0_value():
    pytest.importorskip("cvxpy")
    R = game.b0_expectation(1, 2, 2, 2)
    assert sdp_optimum(sf.game_to_sdp(R)) == pytest.approx(game.b0_expected_value(R), abs=1e-6)
    with pytest.raises(ValidationError):
        sf.game_to_sdp(game.matching_pennies())


def test_random_instance_is_seeded():
    a = sf.random_instance(3, (2, 3), (2, 2))
    b = sf.random_instance(3, (2, 3), (2, 2))
    np.testing.assert_array_equal(a.P, b.P)
    assert a.var_dims == (4, 6)
