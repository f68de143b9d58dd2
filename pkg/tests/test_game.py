import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_mmw import game, qmath
from minimax_mmw.game import PayoffObservable, Referee, UnitaryStrategy, ValidationError

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _random_strategy(rng, d_C, k, turns):
    return UnitaryStrategy(k, tuple(qmath.haar_unitary(rng, d_C * k) for _ in range(turns)))


def _perm(dims, order):
    """Permutation matrix taking factor order ``range(len(dims))`` to ``order``."""
    n = int(np.prod(dims))
    P = np.zeros((n, n))
    for idx in np.ndindex(*dims):
        src = np.ravel_multi_index(idx, dims)
        dst = np.ravel_multi_index(tuple(idx[o] for o in order), tuple(dims[o] for o in order))
        P[dst, src] = 1.0
    return P


def _dense_win(R, alice, bob):
    """Independent density-matrix simulation on C⊗V⊗A⊗B with explicit kron embeddings."""
    dA, dB = alice.private_dim, bob.private_dim
    dims = (R.d_C, R.d_V, dA, dB)
    to_cavb = _perm(dims, (0, 2, 1, 3))
    to_cbva = _perm(dims, (0, 3, 1, 2))

    def ref(V):
        return np.kron(V, np.eye(dA * dB))

    def on_alice(U):
        return to_cavb.T @ np.kron(U, np.eye(R.d_V * dB)) @ to_cavb

    def on_bob(U):
        return to_cbva.T @ np.kron(U, np.eye(R.d_V * dA)) @ to_cbva

    e0 = np.zeros(dA * dB)
    e0[0] = 1.0
    psi = np.kron(R.psi, e0)
    rho = np.outer(psi, psi.conj())
    ops = []
    for i in range(R.a):
        if i > 0:
            ops.append(ref(R.V(i)))
        ops.append(on_alice(alice.U_list[i]))
    for j in range(R.b):
        ops.append(ref(R.V(R.a + j)))
        ops.append(on_bob(bob.U_list[j]))
    ops.append(ref(R.V(R.a + R.b)))
    for O in ops:
        rho = O @ rho @ O.conj().T
    return float(np.real(np.trace(np.kron(R.Pi, np.eye(dA * dB)) @ rho)))


def test_referee_validation_messages():
    R = game.matching_pennies()
    with pytest.raises(ValidationError, match="V_list\\[0\\]"):
        Referee(2, 2, 1, 1, R.psi, (2 * np.eye(4), np.eye(4)), R.Pi)
    with pytest.raises(ValidationError, match="psi"):
        Referee(2, 2, 1, 1, 2 * R.psi, R.V_list, R.Pi)
    with pytest.raises(ValidationError, match="expected 2 unitaries"):
        Referee(2, 2, 1, 1, R.psi, R.V_list[:1], R.Pi)
    with pytest.raises(ValidationError, match="Pi"):
        Referee(2, 2, 1, 1, R.psi, R.V_list, 2 * R.Pi)


def test_strategy_check():
    s = UnitaryStrategy(2, (np.eye(4),))
    s.check(2, 1)
    with pytest.raises(ValidationError):
        s.check(2, 2)
    with pytest.raises(ValidationError):
        UnitaryStrategy(2, (np.ones((4, 4)),)).check(2, 1)
    with pytest.raises(ValidationError):
        UnitaryStrategy(0)


def test_matching_pennies_pure_strategies():
    R = game.matching_pennies()
    X = np.array([[0, 1], [1, 0]])
    alice0, alice1 = UnitaryStrategy(1, (np.eye(2),)), UnitaryStrategy(1, (X,))
    bob0, bob1 = UnitaryStrategy(1, (np.eye(2),)), UnitaryStrategy(1, (X,))
    assert game.win_probability(R, alice0, bob0) == pytest.approx(1.0)
    assert game.win_probability(R, alice0, bob1) == pytest.approx(0.0)
    assert game.win_probability(R, alice1, bob1) == pytest.approx(1.0)
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    # Alice entangles her bit with her private qubit: Bob cannot beat 1/2
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    mixed = UnitaryStrategy(2, (cnot @ np.kron(H, np.eye(2)),))
    for bob in (bob0, bob1):
        assert game.win_probability(R, mixed, bob) == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(
    seeds,
    st.integers(min_value=1, max_value=2),
    st.integers(min_value=1, max_value=2),
    st.integers(min_value=0, max_value=2),
    st.integers(min_value=0, max_value=2),
)
def test_win_probability_matches_dense_simulation(seed, dC, dV, a, b):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, dC, dV, a, b)
    alice = _random_strategy(rng, dC, 2, a)
    bob = _random_strategy(rng, dC, 2, b)
    assert game.win_probability(R, alice, bob) == pytest.approx(_dense_win(R, alice, bob), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=3), st.integers(min_value=1, max_value=2))
def test_transcripts_are_consistent_and_bob_measurement_predicts_wins(seed, a, b):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, 2, 2, a, b)
    alice = _random_strategy(rng, 2, 3, a)
    bob = _random_strategy(rng, 2, 2, b)
    t = game.transcript_of(R, alice)
    assert len(t) == a
    assert all(qmath.is_density(X) for X in t.states)
    assert max(game.consistency_residuals(R, t)) < 1e-10
    P = game.bob_measurement(R, bob)
    assert qmath.is_measurement(P)
    assert np.real(np.vdot(t.states[-1], P)) == pytest.approx(game.win_probability(R, alice, bob), abs=1e-10)


def test_residuals_detect_inconsistency():
    R = game.random_referee(0, 2, 2, 2, 0)
    off = game.Transcript((np.eye(4) / 4, np.eye(4) / 4))
    assert max(game.consistency_residuals(R, off)) > 1e-3
    with pytest.raises(ValidationError):
        game.residual_operators(R, off.states[:1])


def test_rescale_payoff():
    P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    obs = PayoffObservable(("lose", "win"), (P0, P1), (-1.0, 1.0))
    out = game.rescale_payoff(obs)
    np.testing.assert_allclose(out.Pi, P1, atol=1e-12)
    assert (out.scale, out.offset, out.error_inflation) == (2.0, -1.0, 1.0)
    with pytest.raises(ValidationError):
        PayoffObservable(("x", "y"), (P0, P0), (0.0, 1.0))


@settings(max_examples=25, deadline=None)
@given(seeds, st.lists(st.floats(-5, 5), min_size=2, max_size=4))
def test_rescale_payoff_is_affine(seed, payouts):
    rng = np.random.default_rng(seed)
    d = len(payouts)
    U = qmath.haar_unitary(rng, d)
    projs = tuple(np.outer(U[:, k], U[:, k].conj()) for k in range(d))
    obs = PayoffObservable(tuple(range(d)), projs, tuple(payouts))
    out = game.rescale_payoff(obs)
    assert qmath.is_measurement(out.Pi)
    rho = qmath.random_density(rng, d)
    expected = np.real(np.trace(rho @ obs.observable()))
    assert out.scale * np.real(np.trace(rho @ out.Pi)) + out.offset == pytest.approx(expected, abs=1e-9)


def test_instances():
    R = game.b0_expectation(3, 2, 3, 2)
    assert R.b == 0 and R.a == 2
    assert 0 <= game.b0_expected_value(R) <= 1
    assert np.allclose(game.bob_always_wins().Pi, np.eye(4))
    assert game.random_referee(1, 2, 2, 1, 1).name == "random-1"
