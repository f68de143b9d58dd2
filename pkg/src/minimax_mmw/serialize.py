"""JSON documents for referees, strategies, transcripts, SDP instances and reports.

Every document has the top-level fields ``format_version``, ``kind``,
``dims`` and ``payload``. Complex numbers are ``[re, im]`` pairs and
matrices are row-major nested lists. Serialisation is deterministic (sorted
keys, shortest round-trip float repr) so identical objects give identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .game import Referee, Transcript, UnitaryStrategy, ValidationError
from .sdpfront import ChannelKraus, SdpInstance

FORMAT_VERSION = 1
KINDS = ("referee", "strategy", "transcript", "sdp", "report")


class DataError(ValueError):
    """A document cannot be parsed or fails validation; the message names the location."""


# ---------------------------------------------------------------------------
# Numbers


def _num(z: complex) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def encode_vector(v: np.ndarray) -> list:
    return [_num(z) for z in np.asarray(v).ravel()]


def encode_matrix(M: np.ndarray) -> list:
    M = np.asarray(M)
    return [[_num(z) for z in row] for row in M]


def _decode_complex(x: Any, where: str) -> complex:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if (
        isinstance(x, list)
        and len(x) == 2
        and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in x)
    ):
        return complex(x[0], x[1])
    raise DataError(f"{where}: expected a number or [re, im] pair, got {json.dumps(x)[:40]}")


def decode_vector(obj: Any, where: str, dim: int | None = None) -> np.ndarray:
    if not isinstance(obj, list):
        raise DataError(f"{where}: expected a list")
    v = np.array([_decode_complex(x, f"{where}[{i}]") for i, x in enumerate(obj)], dtype=complex)
    if dim is not None and v.shape != (dim,):
        raise DataError(f"{where}: expected length {dim}, got {v.shape[0]}")
    return v


def decode_matrix(obj: Any, where: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise DataError(f"{where}: expected a non-empty list of rows")
    width = len(obj[0])
    out = np.empty((len(obj), width), dtype=complex)
    for i, row in enumerate(obj):
        if len(row) != width:
            raise DataError(f"{where}[{i}]: row has {len(row)} entries, expected {width}")
        for j, x in enumerate(row):
            out[i, j] = _decode_complex(x, f"{where}[{i}][{j}]")
    if rows is not None and out.shape[0] != rows or cols is not None and out.shape[1] != cols:
        raise DataError(f"{where}: expected shape {(rows, cols)}, got {out.shape}")
    return out


# ---------------------------------------------------------------------------
# Documents


def document(kind: str, dims: dict, payload: dict) -> dict:
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    return {"format_version": FORMAT_VERSION, "kind": kind, "dims": dims, "payload": payload}


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=True) + "\n"


def digest(doc: dict) -> str:
    """SHA-256 of the canonical serialisation."""
    return hashlib.sha256(dumps(doc).encode()).hexdigest()


def loads(text: str, expected_kind: str | None = None, source: str = "<input>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"{source}: top level must be an object")
    for key in ("format_version", "kind", "dims", "payload"):
        if key not in doc:
            raise DataError(f"{source}: missing top-level field {key!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise DataError(f"{source}: unsupported format_version {doc['format_version']!r}")
    if expected_kind is not None and doc["kind"] != expected_kind:
        raise DataError(f"{source}: expected kind {expected_kind!r}, got {doc['kind']!r}")
    return doc


def _int(d: dict, key: str, where: str) -> int:
    if key not in d:
        raise DataError(f"{where}: missing {key!r}")
    v = d[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise DataError(f"{where}.{key}: expected an integer")
    return v


def _field(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise DataError(f"{where}: missing {key!r}")
    return d[key]


def _validated(make, where: str):
    try:
        return make()
    except ValidationError as exc:
        raise DataError(f"{where}: {exc}") from exc


# referee


def referee_to_doc(R: Referee) -> dict:
    return document(
        "referee",
        {"d_C": R.d_C, "d_V": R.d_V, "a": R.a, "b": R.b},
        {
            "name": R.name,
            "psi": encode_vector(R.psi),
            "V_list": [encode_matrix(V) for V in R.V_list],
            "Pi": encode_matrix(R.Pi),
        },
    )


def referee_from_doc(doc: dict, source: str = "referee") -> Referee:
    dims, pl = doc["dims"], doc["payload"]
    d_C, d_V = _int(dims, "d_C", "dims"), _int(dims, "d_V", "dims")
    a, b = _int(dims, "a", "dims"), _int(dims, "b", "dims")
    D = d_C * d_V
    psi = decode_vector(_field(pl, "psi", "payload"), "payload.psi", D)
    Vs = _field(pl, "V_list", "payload")
    if not isinstance(Vs, list) or len(Vs) != a + b:
        raise DataError(f"{source}: payload.V_list must hold a + b = {a + b} matrices")
    V_list = tuple(decode_matrix(V, f"payload.V_list[{i}]", D, D) for i, V in enumerate(Vs))
    Pi = decode_matrix(_field(pl, "Pi", "payload"), "payload.Pi", D, D)
    return _validated(lambda: Referee(d_C, d_V, a, b, psi, V_list, Pi, name=str(pl.get("name", ""))), source)


# strategy


def strategy_to_doc(s: UnitaryStrategy, d_C: int, role: str) -> dict:
    return document(
        "strategy",
        {"d_C": d_C, "private_dim": s.private_dim, "turns": len(s.U_list)},
        {"role": role, "U_list": [encode_matrix(U) for U in s.U_list], "approximate": bool(s.approximate)},
    )


def strategy_from_doc(doc: dict, source: str = "strategy") -> tuple:
    """``(strategy, d_C, role)``."""
    dims, pl = doc["dims"], doc["payload"]
    d_C, k, turns = _int(dims, "d_C", "dims"), _int(dims, "private_dim", "dims"), _int(dims, "turns", "dims")
    Us = _field(pl, "U_list", "payload")
    if not isinstance(Us, list) or len(Us) != turns:
        raise DataError(f"{source}: payload.U_list must hold {turns} matrices")
    n = d_C * k
    U_list = tuple(decode_matrix(U, f"payload.U_list[{i}]", n, n) for i, U in enumerate(Us))
    s = _validated(lambda: UnitaryStrategy(k, U_list, bool(pl.get("approximate", False))), source)
    _validated(lambda: s.check(d_C, turns, f"{source}"), source)
    return s, d_C, str(pl.get("role", ""))


# transcript


def transcript_to_doc(t: Transcript, slot_dims) -> dict:
    return document(
        "transcript",
        {"slot_dims": [int(d) for d in slot_dims]},
        {"states": [encode_matrix(X) for X in t.states]},
    )


def transcript_from_doc(doc: dict, source: str = "transcript") -> Transcript:
    dims, pl = doc["dims"], doc["payload"]
    sd = _field(dims, "slot_dims", "dims")
    states = _field(pl, "states", "payload")
    if not isinstance(sd, list) or not isinstance(states, list) or len(sd) != len(states):
        raise DataError(f"{source}: dims.slot_dims and payload.states must be lists of equal length")
    return Transcript(tuple(decode_matrix(X, f"payload.states[{i}]", d, d) for i, (X, d) in enumerate(zip(states, sd))))


# sdp


def sdp_to_doc(inst: SdpInstance, Q_scale: float = 1.0) -> dict:
    return document(
        "sdp",
        {"traced_dims": list(inst.traced_dims), "residual_dims": list(inst.residual_dims)},
        {
            "name": inst.name,
            "channels": [
                {"d_in": ch.d_in, "d_out": ch.d_out, "kraus": [encode_matrix(K) for K in ch.kraus]}
                for ch in inst.channels
            ],
            "Q": encode_matrix(inst.Q * Q_scale),
            "P": encode_matrix(inst.P),
        },
    )


def sdp_from_doc(doc: dict, source: str = "sdp") -> tuple:
    """``(instance, factor)`` where the file's Q was ``factor`` times the instance's (unit-trace) Q."""
    from .sdpfront import normalize_Q

    dims, pl = doc["dims"], doc["payload"]
    td = _field(dims, "traced_dims", "dims")
    rd = _field(dims, "residual_dims", "dims")
    if not isinstance(td, list) or not isinstance(rd, list) or len(td) != len(rd) or not td:
        raise DataError(f"{source}: dims.traced_dims and dims.residual_dims must be non-empty lists of equal length")
    chans = _field(pl, "channels", "payload")
    if not isinstance(chans, list):
        raise DataError(f"{source}: payload.channels must be a list")
    channels = []
    for i, ch in enumerate(chans):
        where = f"payload.channels[{i}]"
        d_in, d_out = _int(ch, "d_in", where), _int(ch, "d_out", where)
        ks = _field(ch, "kraus", where)
        if not isinstance(ks, list):
            raise DataError(f"{where}.kraus must be a list")
        kraus = tuple(decode_matrix(K, f"{where}.kraus[{j}]", d_out, d_in) for j, K in enumerate(ks))
        channels.append(_validated(lambda: ChannelKraus(d_in, d_out, kraus), where))
    Q = decode_matrix(_field(pl, "Q", "payload"), "payload.Q")
    P = decode_matrix(_field(pl, "P", "payload"), "payload.P")
    try:
        Qn, factor = normalize_Q(Q)
    except ValidationError as exc:
        raise DataError(f"payload.Q: {exc}") from exc
    inst = _validated(lambda: SdpInstance(tuple(td), tuple(rd), tuple(channels), Qn, P, str(pl.get("name", ""))), source)
    return inst, factor


# report


@dataclass
class RunReport:
    command: str
    instance_digest: str
    schedule: dict
    value: float
    mode: str
    iterations: int
    wall_time: float
    heuristic: bool = False
    verification: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return document("report", {}, _jsonable(asdict(self)))

    @classmethod
    def from_doc(cls, doc: dict) -> "RunReport":
        return cls(**doc["payload"])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def read(path: str, expected_kind: str | None = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    return loads(text, expected_kind, source=path)


def write(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))
