import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_mmw import game, mmw, oracle, qmath
from minimax_mmw.chain import referee_chain
from minimax_mmw.game import Transcript
from minimax_mmw.mmw import InvariantViolation, Schedule, ScheduleError

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _herm(rng, d):
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return G + qmath.dag(G)


# schedules


def test_paper_schedule_matching_pennies_values():
    s = Schedule.paper(0.2, 1, 4)
    assert s.epsilon == pytest.approx(0.1)
    assert s.gamma == pytest.approx(0.00125)
    assert s.T == math.ceil(math.log(4) / 0.00125**2) == 887229


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(1, 4), st.integers(2, 64))
def test_paper_schedules_meet_error_budget(delta, a, D):
    s = Schedule.paper(delta, a, D)
    assert mmw.error_budget(s, D, a) <= delta / 2 * (1 + 1e-12)


def test_error_budget_rejects_short_schedule():
    s = Schedule(0.2, 0.1, 0.00125, 1000)
    with pytest.raises(ScheduleError):
        mmw.error_budget(s, 4, 1)


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        Schedule(0.2, 0.1, 0.6, 10)
    with pytest.raises(ScheduleError):
        Schedule(-0.2, 0.1, 0.1, 10)
    with pytest.raises(ScheduleError):
        Schedule.paper(0.2, 0, 4)
    assert Schedule.practical(0.2, 2, 4).T == 40000


def test_paper_mode_refuses_to_truncate():
    R = game.b0_expectation(0)
    sched = Schedule.paper(0.2, 1, 4, max_iters=1000)
    with pytest.raises(ScheduleError):
        mmw.solve_lambda(R, sched, oracle.singleton_oracle(R))


# weights and regret


def test_mmw_weights_first_round_is_maximally_mixed():
    W = mmw.mmw_weights([], 0.1, dims=[3, 2])
    np.testing.assert_allclose(W[0], np.eye(3) / 3)
    np.testing.assert_allclose(W[1], np.eye(2) / 2)


def test_mmw_weights_match_matrix_exponential():
    rng = np.random.default_rng(0)
    Ms = [mmw.LossTuple((qmath.random_measurement(rng, 3),)) for _ in range(4)]
    W = mmw.mmw_weights(Ms, 0.3)[0]
    E = qmath.hermitian_exp(-0.3 * sum(M[0] for M in Ms))
    np.testing.assert_allclose(W, E / np.trace(E), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 6))
def test_regret_inequality_adaptive_losses(seed, D):
    """Losses chosen adversarially against the current weights still obey the regret bound."""
    rng = np.random.default_rng(seed)
    gamma, T = 0.05, 60
    hist, cum = [], 0.0
    for _ in range(T):
        rho = mmw.mmw_weights(hist, gamma, dims=[D])[0]
        w, U = np.linalg.eigh(rho)
        M = (U * rng.uniform(0, 1, D)[np.argsort(np.argsort(-w))]) @ qmath.dag(U)
        hist.append(mmw.LossTuple((M,)))
        cum += np.real(np.vdot(rho, M))
    avg = sum(L[0] for L in hist) / T
    best = np.linalg.eigvalsh(avg)[0]
    assert cum / T <= best + gamma + math.log(D) / (gamma * T) + 1e-8


# f and its adjoint


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_f_adjoint_is_adjoint(seed, a, dV):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, 2, dV, a, 1)
    eps = 0.1
    X = [_herm(rng, R.D) for _ in range(a)]
    X = [x / np.trace(x).real if abs(np.trace(x)) > 1e-3 else x for x in X]
    X[0] = qmath.random_density(rng, R.D)
    P = _herm(rng, R.D)
    Pis = [_herm(rng, dV) for _ in range(a)]
    last, res = mmw.f_map(R, Transcript(tuple(X)), eps)
    lhs = np.vdot(last, P) + sum(np.vdot(Z, Y) for Z, Y in zip(res, Pis))
    comps = mmw.f_adjoint(R, P, Pis, eps)
    rhs = sum(np.vdot(x, C) for x, C in zip(X, comps))
    assert np.real(lhs) == pytest.approx(np.real(rhs), abs=1e-8 * (1 + abs(lhs)))


def test_f_map_vanishes_on_consistent_transcripts():
    rng = np.random.default_rng(1)
    R = game.random_referee(4, 2, 2, 3, 0)
    alice = game.UnitaryStrategy(2, tuple(qmath.haar_unitary(rng, 4) for _ in range(3)))
    t = game.transcript_of(R, alice)
    _, res = mmw.f_map(R, t, 0.1)
    assert max(np.linalg.norm(Z) for Z in res) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 3))
def test_loss_tuple_spectrum_bounds(seed, a):
    rng = np.random.default_rng(seed)
    R = game.random_referee(seed, 2, 2, a, 1)
    eps = 0.1
    P = qmath.random_measurement(rng, R.D)
    Pis = [qmath.random_measurement(rng, 2) for _ in range(a)]
    for M in mmw.loss_tuple(R, P, Pis, eps, a):
        w = np.linalg.eigvalsh(M)
        assert w[0] >= -1e-8 and w[-1] <= 1 / a + 1e-8


def test_loss_tuple_rejects_out_of_range_operators():
    R = game.random_referee(0, 2, 2, 1, 1)
    with pytest.raises(InvariantViolation):
        mmw.loss_tuple(R, 50 * np.eye(4), [np.eye(2)], 0.1, 1)


# the solver


def _b0_run(seed, a, max_iters=20000, **kw):
    R = game.b0_expectation(seed, 2, 2, a)
    sched = Schedule.practical(0.2, a, R.D, max_iters=max_iters)
    return R, mmw.solve_lambda(R, sched, oracle.singleton_oracle(R), **kw)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_b0_single_slot_solution(seed):
    R, res = _b0_run(seed, 1)
    lam = game.b0_expected_value(R)
    assert abs(res.lambda_tilde - lam) <= 0.2
    # lower bound is rigorous; the rounded transcript is feasible, so it cannot beat the optimum
    assert res.lower_bound <= lam + 1e-9
    assert res.rounded_value >= lam - 1e-9
    assert max(res.rounded_residuals) < 1e-6
    lo, hi = res.loss_spectrum
    assert lo >= -1e-8 and hi <= 1 + 1e-8
    assert res.heuristic


def test_stacked_and_per_slot_engines_agree():
    R = game.b0_expectation(3, 2, 2, 2)
    chain = referee_chain(R)
    plain = dataclasses.replace(chain, forward_stack=None, adjoint_stack=None)
    assert chain.uniform and not plain.uniform
    P = oracle.singleton_oracle(R).P
    sched = Schedule.practical(0.2, 2, R.D, max_iters=400)
    r1 = mmw.run_chain(chain, lambda rho, acc: (P, None), sched)
    r2 = mmw.run_chain(plain, lambda rho, acc: (P, None), sched)
    assert r1.lambda_tilde == pytest.approx(r2.lambda_tilde, abs=1e-6)
    for X, Y in zip(r1.avg_transcript.states, r2.avg_transcript.states):
        np.testing.assert_allclose(X, Y, atol=1e-6)


def test_trace_and_payloads():
    R = game.b0_expectation(0, 2, 2, 1)
    rows = []
    sched = Schedule.practical(0.2, 1, R.D, max_iters=120)
    res = mmw.solve_lambda(R, sched, oracle.singleton_oracle(R), trace=rows.append, keep_payloads=True)
    assert len(rows) == res.iterations_run == len(res.oracle_payloads)
    assert {"t", "payoff", "residual", "elapsed"} <= set(rows[0])
    assert res.lambda_tilde == pytest.approx(np.mean(res.payoffs))


def test_oracle_returning_invalid_operator_violates_loss_bounds():
    R = game.b0_expectation(0, 2, 2, 1)
    sched = Schedule.practical(0.2, 1, R.D, max_iters=10)
    with pytest.raises(InvariantViolation):
        mmw.solve_lambda(R, sched, lambda rho, acc: (100 * np.eye(4), None))


def test_solve_lambda_needs_alice():
    R = game.random_referee(0, 2, 2, 0, 1)
    with pytest.raises(ScheduleError):
        mmw.solve_lambda(R, Schedule(0.2, 0.1, 0.1, 10), oracle.singleton_oracle(game.b0_expectation(0)))
