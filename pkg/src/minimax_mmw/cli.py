"""Command-line interface: ``minimax-mmw {solve,decide,verify,sdp,gen}``.

Exit codes: 0 success or accept, 1 reject, 2 inconclusive, 64 usage,
65 bad input data, 70 internal invariant violated.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import game, oracle, qmath, sdpfront, serialize
from .game import ValidationError
from .mmw import PAPER, PRACTICAL, InvariantViolation, Schedule, ScheduleError, error_budget, solve_lambda
from .serialize import DataError, RunReport

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_INTERNAL = 70

THREADS_ENV = "MINIMAX_MMW_THREADS"

log = logging.getLogger("minimax_mmw")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Helpers


class TraceWriter:
    """Writes one JSON line per MMW iteration."""

    def __init__(self, path: Optional[str]):
        self.fh = open(path, "w", encoding="utf-8") if path else None

    def __call__(self, rec: dict):
        if self.fh is not None:
            self.fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self):
        if self.fh is not None:
            self.fh.close()

    @property
    def active(self):
        return self.fh is not None


def _schedule(mode: str, delta: float, a: int, D: int, max_iters: Optional[int]) -> Schedule:
    if mode == PAPER:
        return Schedule.paper(delta, a, D, max_iters=max_iters)
    return Schedule.practical(delta, a, D, max_iters=max_iters)


def _out_dir(path: Optional[str]) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(report: RunReport, out: Optional[Path]) -> None:
    doc = report.to_doc()
    if out is not None:
        report.artifacts["report"] = str(out / "report.json")
        doc = report.to_doc()
        serialize.write(str(out / "report.json"), doc)
    sys.stdout.write(serialize.dumps(doc))


def run_game(R: game.Referee, delta: float, mode: str, max_iters: Optional[int], inner_iters: int,
             trace: Optional[TraceWriter] = None, bracket: bool = True) -> dict:
    """Solve a referee; returns the solve result, strategies and verification numbers."""
    out: dict = {"verification": {}, "details": {}}
    ver = out["verification"]
    if R.a == 0:
        br = oracle.solve_without_alice(R, delta, max_iters=inner_iters)
        out.update(value=br.value, iterations=br.inner.iterations_run if br.inner else 0,
                   schedule={"delta": delta, "mode": mode, "note": "no Alice turns: single best response"},
                   heuristic=True, wall_time=br.inner.wall_time if br.inner else 0.0,
                   alice=game.UnitaryStrategy(1, ()), bob=br.bob, transcript=None, slot_dims=[])
        ver["lower_bound"] = br.value
        ver["upper_bound"] = br.value + br.error_bound
        ver["win_probability"] = game.win_probability(R, out["alice"], br.bob)
        return out
    sched = _schedule(mode, delta, R.a, R.D, max_iters)
    orc = oracle.make_oracle(R, max_iters=inner_iters) if R.b > 0 else oracle.make_oracle(R)
    res = solve_lambda(R, sched, orc, trace=trace if trace is not None and trace.active else None,
                       keep_payloads=R.b > 0)
    alice = oracle.extract_alice(R, res.rounded_transcript)
    bob = oracle.mix_iterates(res, R.d_C) if R.b > 0 else game.UnitaryStrategy(1, ())
    out.update(value=res.lambda_tilde, iterations=res.iterations_run, schedule=sched.as_dict(),
               heuristic=res.heuristic, wall_time=res.wall_time, alice=alice, bob=bob,
               transcript=res.rounded_transcript, slot_dims=[R.D] * R.a, result=res)
    ver["stop_reason"] = res.stop_reason
    ver["gap"] = res.gap
    ver["lower_bound"] = res.lower_bound
    ver["rounded_value"] = res.rounded_value
    ver["rounded_residual_max"] = max(res.rounded_residuals)
    ver["loss_spectrum"] = list(res.loss_spectrum)
    ver["win_probability"] = game.win_probability(R, alice, bob)
    ver["bob_mixture_approximate"] = bool(bob.approximate)
    if mode == PAPER:
        ver["regret_bound"] = error_budget(sched, R.D, R.a)
    if R.b > 0:
        ver["oracle"] = orc.stats()
        if bracket:
            ver["upper_bound"] = oracle.certified_bracket(R, res, max_iters=inner_iters)[1]
    else:
        ver["upper_bound"] = res.rounded_value
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_solve(args) -> int:
    doc = serialize.read(args.referee, "referee")
    R = serialize.referee_from_doc(doc, args.referee)
    trace = TraceWriter(args.trace)
    try:
        sol = run_game(R, args.delta, args.mode, args.max_iters, args.inner_iters, trace)
    finally:
        trace.close()
    out = _out_dir(args.out)
    artifacts = {}
    if args.trace:
        artifacts["trace"] = args.trace
    if out is not None:
        if sol["transcript"] is not None:
            serialize.write(str(out / "transcript.json"), serialize.transcript_to_doc(sol["transcript"], sol["slot_dims"]))
            artifacts["transcript"] = str(out / "transcript.json")
        serialize.write(str(out / "alice.json"), serialize.strategy_to_doc(sol["alice"], R.d_C, "alice"))
        serialize.write(str(out / "bob.json"), serialize.strategy_to_doc(sol["bob"], R.d_C, "bob"))
        artifacts["alice"] = str(out / "alice.json")
        artifacts["bob"] = str(out / "bob.json")
    report = RunReport(
        command="solve",
        instance_digest=serialize.digest(doc),
        schedule=sol["schedule"],
        value=float(sol["value"]),
        mode=args.mode,
        iterations=int(sol["iterations"]),
        wall_time=float(sol["wall_time"]),
        heuristic=bool(sol["heuristic"]),
        verification=sol["verification"],
        artifacts=artifacts,
        details={"referee": R.name, "delta": args.delta},
    )
    _emit(report, out)
    return EXIT_OK


def decide(value: float, c: float, s: float, delta: float) -> str:
    if value <= s + delta:
        return "accept"
    if value >= c - delta:
        return "reject"
    return "inconclusive"


def cmd_decide(args) -> int:
    if not args.c > args.s:
        raise UsageError("--c must exceed --s")
    delta = args.delta_override if args.delta_override is not None else (args.c - args.s) / 3
    doc = serialize.read(args.referee, "referee")
    R = serialize.referee_from_doc(doc, args.referee)
    sol = run_game(R, delta, args.mode, args.max_iters, args.inner_iters, bracket=False)
    outcome = decide(sol["value"], args.c, args.s, delta)
    report = RunReport(
        command="decide",
        instance_digest=serialize.digest(doc),
        schedule=sol["schedule"],
        value=float(sol["value"]),
        mode=args.mode,
        iterations=int(sol["iterations"]),
        wall_time=float(sol["wall_time"]),
        heuristic=bool(sol["heuristic"]),
        verification=sol["verification"],
        details={"decision": outcome, "c": args.c, "s": args.s, "delta": delta},
    )
    _emit(report, None)
    return {"accept": EXIT_OK, "reject": EXIT_REJECT, "inconclusive": EXIT_INCONCLUSIVE}[outcome]


def deviation_gains(R: game.Referee, alice: game.UnitaryStrategy, bob: game.UnitaryStrategy,
                    samples: int, seed: int) -> dict:
    """Win probability and the best gains from sampled random unilateral deviations."""
    wp = game.win_probability(R, alice, bob)
    rng = np.random.default_rng(seed)
    best_a, best_b = wp, wp
    nA, nB = R.d_C * alice.private_dim, R.d_C * bob.private_dim
    for _ in range(samples):
        if R.a:
            dev = game.UnitaryStrategy(alice.private_dim, tuple(qmath.haar_unitary(rng, nA) for _ in range(R.a)))
            best_a = min(best_a, game.win_probability(R, dev, bob))
        if R.b:
            dev = game.UnitaryStrategy(bob.private_dim, tuple(qmath.haar_unitary(rng, nB) for _ in range(R.b)))
            best_b = max(best_b, game.win_probability(R, alice, dev))
    return {"win_probability": wp, "alice_gain": wp - best_a, "bob_gain": best_b - wp}


def cmd_verify(args) -> int:
    doc = serialize.read(args.referee, "referee")
    R = serialize.referee_from_doc(doc, args.referee)
    alice, dca, _ = serialize.strategy_from_doc(serialize.read(args.alice, "strategy"), args.alice)
    bob, dcb, _ = serialize.strategy_from_doc(serialize.read(args.bob, "strategy"), args.bob)
    if dca != R.d_C or dcb != R.d_C:
        raise DataError("strategy d_C does not match the referee")
    try:
        alice.check(R.d_C, R.a, "alice")
        bob.check(R.d_C, R.b, "bob")
    except ValidationError as exc:
        raise DataError(str(exc)) from exc
    gains = deviation_gains(R, alice, bob, args.samples, args.seed)
    report = RunReport(
        command="verify",
        instance_digest=serialize.digest(doc),
        schedule={},
        value=gains["win_probability"],
        mode="simulation",
        iterations=args.samples,
        wall_time=0.0,
        verification=gains,
        details={"samples": args.samples, "seed": args.seed},
    )
    _emit(report, None)
    return EXIT_OK


def cmd_sdp(args) -> int:
    doc = serialize.read(args.instance, "sdp")
    inst, factor = serialize.sdp_from_doc(doc, args.instance)
    if abs(factor - 1.0) > qmath.TAU_CHK:
        log.warning("tr Q = %.6g; solving the normalised program and scaling the objective by that factor", factor)
    a = inst.n
    sched = _schedule(args.mode, args.delta, a, max(inst.var_dims), args.max_iters)
    trace = TraceWriter(args.trace)
    try:
        res = sdpfront.solve_sdp(inst, sched, trace=trace if trace.active else None)
    finally:
        trace.close()
    out = _out_dir(args.out)
    artifacts = {}
    if out is not None:
        scaled = [X * factor for X in res.rounded_transcript.states]
        serialize.write(str(out / "solution.json"),
                        serialize.transcript_to_doc(type(res.rounded_transcript)(tuple(scaled)), inst.var_dims))
        artifacts["solution"] = str(out / "solution.json")
    if args.trace:
        artifacts["trace"] = args.trace
    report = RunReport(
        command="sdp",
        instance_digest=serialize.digest(doc),
        schedule=sched.as_dict(),
        value=float(factor * res.lambda_tilde),
        mode=args.mode,
        iterations=res.iterations_run,
        wall_time=res.wall_time,
        heuristic=res.heuristic,
        verification={
            "stop_reason": res.stop_reason,
            "lower_bound": factor * res.lower_bound,
            "rounded_objective": factor * res.rounded_value,
            "rounded_residual_max": max(res.rounded_residuals),
            "loss_spectrum": list(res.loss_spectrum),
        },
        artifacts=artifacts,
        details={"Q_trace_factor": factor, "delta": args.delta},
    )
    _emit(report, out)
    return EXIT_OK


GEN_KINDS = ("random", "matching-pennies", "bob-always-wins", "b0-expectation")


def generate(kind: str, seed: int, dc: int, dv: int, a: int, b: int) -> game.Referee:
    if kind == "random":
        return game.random_referee(seed, dc, dv, a, b)
    if kind == "matching-pennies":
        return game.matching_pennies()
    if kind == "bob-always-wins":
        return game.bob_always_wins(dc, dv, a, b, seed)
    if kind == "b0-expectation":
        return game.b0_expectation(seed, dc, dv, a)
    raise UsageError(f"unknown kind {kind!r}")


def cmd_gen(args) -> int:
    R = generate(args.kind, args.seed, args.dc, args.dv, args.a, args.b)
    if args.as_sdp:
        try:
            doc = serialize.sdp_to_doc(sdpfront.game_to_sdp(R))
        except ValidationError as exc:
            raise UsageError(str(exc)) from exc
    else:
        doc = serialize.referee_to_doc(R)
    text = serialize.dumps(doc)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="minimax-mmw", description="Approximate values of double quantum interactive proofs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(sp, default_delta=None):
        sp.add_argument("--mode", choices=(PAPER, PRACTICAL), default=PRACTICAL)
        sp.add_argument("--max-iters", type=int, default=None)
        sp.add_argument("--inner-iters", type=int, default=20000, help="iteration cap of each nested best response")
        if default_delta is not None:
            sp.add_argument("--delta", type=float, default=default_delta)

    sp = sub.add_parser("solve", help="approximate the game value")
    sp.add_argument("referee")
    solver_flags(sp, 0.2)
    sp.add_argument("--out", help="directory for report and strategies")
    sp.add_argument("--trace", help="write the iteration trace to this file (JSON lines)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("decide", help="threshold the value into accept/reject/inconclusive")
    sp.add_argument("referee")
    sp.add_argument("--c", type=float, required=True)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--delta-override", type=float, default=None)
    solver_flags(sp)
    sp.set_defaults(func=cmd_decide)

    sp = sub.add_parser("verify", help="simulate a strategy pair and sample deviations")
    sp.add_argument("referee")
    sp.add_argument("alice")
    sp.add_argument("bob")
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sdp", help="solve a transcript-constrained SDP")
    sp.add_argument("instance")
    sp.add_argument("--delta", type=float, default=0.2)
    sp.add_argument("--mode", choices=(PAPER, PRACTICAL), default=PRACTICAL)
    sp.add_argument("--max-iters", type=int, default=None)
    sp.add_argument("--out")
    sp.add_argument("--trace")
    sp.set_defaults(func=cmd_sdp)

    sp = sub.add_parser("gen", help="write a generated instance")
    sp.add_argument("--kind", choices=GEN_KINDS, default="random")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dc", type=int, default=2)
    sp.add_argument("--dv", type=int, default=2)
    sp.add_argument("--a", type=int, default=1)
    sp.add_argument("--b", type=int, default=1)
    sp.add_argument("--as-sdp", action="store_true", help="emit the SDP form (b = 0 only)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)
    return p


def _thread_limit():
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 0:
        raise UsageError(f"{THREADS_ENV} must be >= 0")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        if getattr(args, "delta", None) is not None and args.delta <= 0:
            raise UsageError("--delta must be positive")
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        print(f"minimax-mmw: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScheduleError as exc:
        print(f"minimax-mmw: schedule error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValidationError) as exc:
        print(f"minimax-mmw: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as exc:
        print(f"minimax-mmw: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
