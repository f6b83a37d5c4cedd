"""Distributed two-station realization over TCP with schema-enforced locality.

Topology: a source process and a collator process listen; the two
station processes dial both and nothing else. The source broadcasts
identical pair events (index, hidden variable, time parameter) to both
stations; each station computes its outcome from its OWN setting, the
event, and a gauge key file distributed out-of-band; the key never
travels on the wire. Stations stream outcome reports to the collator,
which joins them into a dataset either by pair index or by arrival
order (the latter deliberately fragile: one lost report misaligns the
whole tail, and nothing in the data can reveal it).

Wire format: 4-byte big-endian length prefix + UTF-8 JSON. The message
grammar a station can receive is fixed and scalar-only; no receivable
field can carry the other wing's setting.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .experiments import RunDataset, RunGroup
from .model import (
    GaugeKey,
    PairEvent,
    Setting,
    derive_subseed,
    measure_left,
    measure_right,
    sample_pair_stream,
)

__all__ = [
    "WIRE_VERSION",
    "STATION_RECEIVABLE_SCHEMAS",
    "COLLATOR_RECEIVABLE_SCHEMAS",
    "SOURCE_RECEIVABLE_SCHEMAS",
    "ProtocolError",
    "SchemaError",
    "KeyFileError",
    "CollationError",
    "SourceEmit",
    "StationReport",
    "ReportBatch",
    "SourceLog",
    "StationLog",
    "CollationResult",
    "send_frame",
    "recv_frame",
    "validate_message",
    "write_key_file",
    "load_key_file",
    "make_server_socket",
    "source_run",
    "station_run",
    "replay_station",
    "collate",
    "station_batches",
    "inject_fault",
    "collator_serve",
    "write_emission_log",
    "load_emission_log",
    "write_report_log",
    "load_report_log",
]

WIRE_VERSION = 1

_SCALAR = (int, float)

# Message grammars by receiving role: {type: {field: checker}}. Validation
# is exact-key-set, so a field outside the grammar is rejected, not ignored.
STATION_RECEIVABLE_SCHEMAS = {
    "emit": {"v": int, "type": str, "n": int, "lambda": _SCALAR, "t": _SCALAR},
    "end": {"v": int, "type": str, "count": int},
}
COLLATOR_RECEIVABLE_SCHEMAS = {
    "key_digest": {"v": int, "type": str, "station": str, "digest_hex": str},
    "report": {
        "v": int,
        "type": str,
        "n": int,
        "station": str,
        "setting": list,
        "outcome": int,
        "clock_ns": int,
    },
    "end": {"v": int, "type": str, "station": str, "count": int},
}
SOURCE_RECEIVABLE_SCHEMAS = {
    "hello": {"v": int, "type": str, "station": str},
}


class ProtocolError(RuntimeError):
    """Framing or connection-state violation."""


class SchemaError(ValueError):
    """A message does not match the receiving role's grammar."""


class KeyFileError(RuntimeError):
    """Gauge key file missing or unreadable."""


class CollationError(RuntimeError):
    """Reports cannot be joined into a dataset."""


def send_frame(sock: socket.socket, obj: dict) -> None:
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    sock.sendall(struct.pack("!I", len(raw)) + raw)


def _recv_exact(sock: socket.socket, size: int) -> bytes | None:
    buf = b""
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            return None if not buf else buf
        buf += chunk
    return buf


def recv_frame(sock: socket.socket) -> dict | None:
    """Next message, or None on clean end-of-stream at a frame boundary."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    if len(header) < 4:
        raise ProtocolError("connection dropped inside a frame header")
    (size,) = struct.unpack("!I", header)
    payload = _recv_exact(sock, size)
    if payload is None or len(payload) < size:
        raise ProtocolError("connection dropped inside a frame body")
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable frame: {exc}") from exc


def validate_message(msg, schemas: dict) -> str:
    """Check a message against a role grammar; returns the message type.

    Exact key set, scalar/type check per field, wire version pinned.
    Booleans are rejected where numbers are expected.
    """
    if not isinstance(msg, dict):
        raise SchemaError(f"message must be an object, got {type(msg).__name__}")
    kind = msg.get("type")
    if kind not in schemas:
        raise SchemaError(f"unknown message type {kind!r} for this role")
    grammar = schemas[kind]
    if set(msg) != set(grammar):
        raise SchemaError(f"fields {sorted(msg)} do not match the {kind!r} grammar {sorted(grammar)}")
    for name, checker in grammar.items():
        value = msg[name]
        if isinstance(value, bool) or not isinstance(value, checker):
            raise SchemaError(f"field {name!r} of {kind!r} has invalid type {type(value).__name__}")
    if msg["v"] != WIRE_VERSION:
        raise SchemaError(f"unsupported wire version {msg['v']!r}")
    return kind


@dataclass(frozen=True)
class SourceEmit:
    """One broadcast pair event; carries no setting information by schema."""

    n: int
    lam: float
    t: float

    def to_wire(self) -> dict:
        return {"v": WIRE_VERSION, "type": "emit", "n": self.n, "lambda": self.lam, "t": self.t}

    @classmethod
    def from_wire(cls, msg: dict) -> "SourceEmit":
        return cls(n=int(msg["n"]), lam=float(msg["lambda"]), t=float(msg["t"]))


@dataclass(frozen=True)
class StationReport:
    """One wing's outcome with its own setting and a station-local clock stamp."""

    n: int
    station: str
    setting: Setting
    outcome: int
    clock_ns: int

    def to_wire(self) -> dict:
        return {
            "v": WIRE_VERSION,
            "type": "report",
            "n": self.n,
            "station": self.station,
            "setting": [self.setting.b2, self.setting.b3],
            "outcome": self.outcome,
            "clock_ns": self.clock_ns,
        }

    @classmethod
    def from_wire(cls, msg: dict) -> "StationReport":
        b2, b3 = msg["setting"]
        return cls(
            n=int(msg["n"]),
            station=msg["station"],
            setting=Setting(float(b2), float(b3)),
            outcome=int(msg["outcome"]),
            clock_ns=int(msg["clock_ns"]),
        )


@dataclass(frozen=True)
class ReportBatch:
    """Columnar report stream of one station (fast path for large runs)."""

    station: str
    setting: Setting
    n: np.ndarray
    outcome: np.ndarray
    clock_ns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.n)

    @classmethod
    def from_reports(cls, reports: Sequence[StationReport]) -> "ReportBatch":
        if not reports:
            raise ValueError("empty report stream")
        station = reports[0].station
        setting = reports[0].setting
        for r in reports:
            if r.station != station or not r.setting.close_to(setting):
                raise ValueError("a report batch must come from one station session")
        return cls(
            station=station,
            setting=setting,
            n=np.array([r.n for r in reports], dtype=np.int64),
            outcome=np.array([r.outcome for r in reports], dtype=np.int8),
            clock_ns=np.array([r.clock_ns for r in reports], dtype=np.int64),
        )


def _as_batch(stream: Union[ReportBatch, Sequence[StationReport]]) -> ReportBatch:
    if isinstance(stream, ReportBatch):
        return stream
    return ReportBatch.from_reports(list(stream))


def station_batches(group) -> tuple[ReportBatch, ReportBatch]:
    """The (L, R) report streams a run group would have produced on the wire."""
    left = ReportBatch(station="L", setting=group.left_setting,
                       n=group.pair_index.copy(), outcome=group.left.copy())
    right = ReportBatch(station="R", setting=group.right_setting,
                        n=group.pair_index.copy(), outcome=group.right.copy())
    return left, right


# ---------------------------------------------------------------------------
# Gauge key files (distributed out-of-band, never on the wire)


def write_key_file(path, key: GaugeKey) -> None:
    payload = {"kind": "gauge-key", **key.to_json()}
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_key_file(path) -> GaugeKey:
    path = Path(path)
    if not path.exists():
        raise KeyFileError(f"gauge key file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        if obj.get("kind") != "gauge-key":
            raise ValueError("not a gauge-key file")
        return GaugeKey.from_json(obj)
    except (OSError, ValueError, KeyError) as exc:
        raise KeyFileError(f"unreadable gauge key file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Logs


@dataclass
class SourceLog:
    seed: int
    session_index: int
    count: int
    emissions: list[SourceEmit]
    status: str = "complete"  # or "partial"
    detail: str = ""


@dataclass
class StationLog:
    station: str
    setting: Setting
    key_digest: str
    reports: list[StationReport] = field(default_factory=list)
    connections: list[tuple[str, str, int]] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)


def write_emission_log(log: SourceLog, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        header = {
            "v": WIRE_VERSION,
            "kind": "emission-log",
            "seed": log.seed,
            "session": log.session_index,
            "count": log.count,
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for e in log.emissions:
            fh.write(json.dumps({"v": WIRE_VERSION, "n": e.n, "lambda": e.lam, "t": e.t},
                                sort_keys=True, separators=(",", ":")) + "\n")
        fh.write(json.dumps({"v": WIRE_VERSION, "status": log.status, "sent": len(log.emissions),
                             "detail": log.detail}, sort_keys=True, separators=(",", ":")) + "\n")


def load_emission_log(path) -> SourceLog:
    with Path(path).open("r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "emission-log":
            raise ValueError(f"not an emission log: {path}")
        emissions = []
        status, detail = "partial", "missing trailer"
        for raw in fh:
            obj = json.loads(raw)
            if "status" in obj:
                status, detail = obj["status"], obj.get("detail", "")
                break
            emissions.append(SourceEmit(n=int(obj["n"]), lam=float(obj["lambda"]), t=float(obj["t"])))
    return SourceLog(
        seed=int(header["seed"]),
        session_index=int(header["session"]),
        count=int(header["count"]),
        emissions=emissions,
        status=status,
        detail=detail,
    )


def write_report_log(log: StationLog, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        header = {
            "v": WIRE_VERSION,
            "kind": "report-log",
            "station": log.station,
            "setting": [log.setting.b2, log.setting.b3],
            "key_digest": log.key_digest,
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for r in log.reports:
            fh.write(json.dumps(r.to_wire(), sort_keys=True, separators=(",", ":")) + "\n")


def load_report_log(path) -> ReportBatch:
    with Path(path).open("r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "report-log":
            raise ValueError(f"not a report log: {path}")
        reports = [StationReport.from_wire(json.loads(raw)) for raw in fh]
    if not reports:
        raise ValueError(f"report log {path} holds no reports")
    return ReportBatch.from_reports(reports)


# ---------------------------------------------------------------------------
# Source process


def make_server_socket(host: str = "127.0.0.1", port: int = 0) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(8)
    return sock


def _accept_stations(server: socket.socket, schemas: dict, timeout: float) -> dict[str, socket.socket]:
    """Accept connections until both L and R have said hello."""
    conns: dict[str, socket.socket] = {}
    server.settimeout(timeout)
    while set(conns) != {"L", "R"}:
        conn, _ = server.accept()
        conn.settimeout(timeout)
        try:
            msg = recv_frame(conn)
            kind = validate_message(msg, schemas)
            station = msg["station"]
            if kind != "hello" or station not in ("L", "R") or station in conns:
                raise SchemaError(f"unexpected hello for station {station!r}")
        except (ProtocolError, SchemaError):
            conn.close()
            continue
        conns[station] = conn
    return conns


def source_run(
    seed: int,
    count: int,
    sock: socket.socket | None = None,
    bind: tuple[str, int] | None = None,
    session_index: int = 0,
    log_path=None,
    timeout: float = 60.0,
) -> SourceLog:
    """Broadcast one session of pair events to both stations.

    Session ``i`` draws from sub-seed ``i`` of the master seed and owns
    pair indices i*count+1 .. (i+1)*count, so successive sessions (e.g.
    the right wing re-running with another setting) live on disjoint
    sample spaces. Waits for both stations before emitting. A station
    disconnect aborts the run and marks the log partial.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    server = sock if sock is not None else make_server_socket(*(bind or ("127.0.0.1", 0)))
    log = SourceLog(seed=seed, session_index=session_index, count=count, emissions=[])
    conns: dict[str, socket.socket] = {}
    try:
        conns = _accept_stations(server, SOURCE_RECEIVABLE_SCHEMAS, timeout)
        if count > 0:
            stream = sample_pair_stream(derive_subseed(seed, session_index), count)
            stream = stream.with_start_index(session_index * count + 1)
            try:
                for event in stream:
                    emit = SourceEmit(n=event.n, lam=event.lam, t=event.t)
                    wire = emit.to_wire()
                    for station in ("L", "R"):
                        send_frame(conns[station], wire)
                    log.emissions.append(emit)
            except OSError as exc:
                log.status = "partial"
                log.detail = f"station disconnected after {len(log.emissions)} emissions: {exc}"
        if log.status == "complete":
            for station in ("L", "R"):
                try:
                    send_frame(conns[station], {"v": WIRE_VERSION, "type": "end", "count": len(log.emissions)})
                except OSError as exc:
                    log.status = "partial"
                    log.detail = f"end marker undeliverable to {station}: {exc}"
    finally:
        for conn in conns.values():
            conn.close()
        server.close()
        if log_path is not None:
            write_emission_log(log, log_path)
    return log


# ---------------------------------------------------------------------------
# Station process


def _dial(endpoint: tuple[str, int], timeout: float, retries: int = 20, delay: float = 0.15) -> socket.socket:
    last: Exception | None = None
    for _ in range(retries):
        try:
            return socket.create_connection(endpoint, timeout=timeout)
        except OSError as exc:
            last = exc
            time.sleep(delay)
    raise ProtocolError(f"cannot connect to {endpoint[0]}:{endpoint[1]}: {last}")


def station_run(
    station_id: str,
    setting: Setting,
    key_path,
    source: tuple[str, int],
    collator: tuple[str, int],
    log_path=None,
    timeout: float = 60.0,
) -> StationLog:
    """Run one measurement station.

    Computes each outcome from ONLY (own setting, received event, local
    key file). The station dials exactly two endpoints (source and
    collator), and the grammar of what it can receive contains no field
    that could carry the remote setting. Refuses to start without the
    key file; malformed events are rejected and logged, not measured.
    """
    if station_id not in ("L", "R"):
        raise ValueError(f"station_id must be 'L' or 'R', got {station_id!r}")
    key = load_key_file(key_path)  # KeyFileError if absent
    log = StationLog(station=station_id, setting=setting, key_digest=key.digest_hex())

    src = _dial(source, timeout)
    log.connections.append(("source", source[0], source[1]))
    col = _dial(collator, timeout)
    log.connections.append(("collator", collator[0], collator[1]))
    src.settimeout(timeout)
    col.settimeout(timeout)
    try:
        send_frame(src, {"v": WIRE_VERSION, "type": "hello", "station": station_id})
        send_frame(col, {"v": WIRE_VERSION, "type": "key_digest", "station": station_id,
                         "digest_hex": log.key_digest})
        while True:
            msg = recv_frame(src)
            if msg is None:
                log.rejected.append("stream ended without an end marker")
                break
            try:
                kind = validate_message(msg, STATION_RECEIVABLE_SCHEMAS)
            except SchemaError as exc:
                log.rejected.append(str(exc))
                continue
            if kind == "end":
                break
            try:
                event = PairEvent(n=int(msg["n"]), lam=float(msg["lambda"]), t=float(msg["t"]))
            except ValueError as exc:
                log.rejected.append(f"emit rejected: {exc}")
                continue
            if station_id == "L":
                outcome = measure_left(setting, event, key)
            else:
                outcome = measure_right(setting, event, key)
            report = StationReport(
                n=event.n,
                station=station_id,
                setting=setting,
                outcome=outcome,
                clock_ns=time.monotonic_ns(),
            )
            send_frame(col, report.to_wire())
            log.reports.append(report)
        send_frame(col, {"v": WIRE_VERSION, "type": "end", "station": station_id,
                         "count": len(log.reports)})
    finally:
        src.close()
        col.close()
        if log_path is not None:
            write_report_log(log, log_path)
    return log


def replay_station(emissions: Iterable[SourceEmit], station_id: str, setting: Setting, key: GaugeKey) -> list[int]:
    """Recompute a station's outcomes from an emission log (purity check)."""
    out = []
    for e in emissions:
        event = PairEvent(n=e.n, lam=e.lam, t=e.t)
        if station_id == "L":
            out.append(measure_left(setting, event, key))
        else:
            out.append(measure_right(setting, event, key))
    return out


# ---------------------------------------------------------------------------
# Collation


@dataclass
class CollationResult:
    dataset: RunDataset
    strategy: str
    incomplete: tuple[int, ...] = ()
    left_count: int = 0
    right_count: int = 0
    digests: dict = field(default_factory=dict)
    partial: bool = False


def collate(
    left: Union[ReportBatch, Sequence[StationReport]],
    right: Union[ReportBatch, Sequence[StationReport]],
    strategy: str = "pair-id",
    emission_log: SourceLog | None = None,
    group_label: str = "pair0",
) -> CollationResult:
    """Join the two wings' report streams into a dataset.

    pair-id joins on the pair index: duplicates are a hard error, gaps
    are reported and the rest survives untouched. sequence-order zips
    the streams by arrival position; a join whose misalignment after a
    lost report is undetectable by construction.
    """
    lb, rb = _as_batch(left), _as_batch(right)
    if lb.station != "L" or rb.station != "R":
        raise CollationError(f"expected an L stream and an R stream, got {lb.station!r}/{rb.station!r}")
    if strategy not in ("pair-id", "sequence-order"):
        raise CollationError(f"unknown matching strategy {strategy!r}")

    incomplete: list[int] = []
    if strategy == "pair-id":
        for batch in (lb, rb):
            uniq, counts = np.unique(batch.n, return_counts=True)
            if np.any(counts > 1):
                dup = int(uniq[np.argmax(counts > 1)])
                raise CollationError(f"duplicate pair index {dup} in station {batch.station} stream")
        common = np.intersect1d(lb.n, rb.n)
        only_l = np.setdiff1d(lb.n, rb.n)
        only_r = np.setdiff1d(rb.n, lb.n)
        incomplete = sorted(int(x) for x in np.concatenate([only_l, only_r]))
        if emission_log is not None:
            emitted = np.array([e.n for e in emission_log.emissions], dtype=np.int64)
            stray = np.setdiff1d(common, emitted)
            if stray.size:
                raise CollationError(f"report for never-emitted pair index {int(stray[0])}")
            lost = np.setdiff1d(emitted, np.union1d(lb.n, rb.n))
            incomplete = sorted(set(incomplete) | {int(x) for x in lost})
        l_order = np.argsort(lb.n, kind="stable")
        r_order = np.argsort(rb.n, kind="stable")
        l_sorted_n, l_sorted_out = lb.n[l_order], lb.outcome[l_order]
        r_sorted_n, r_sorted_out = rb.n[r_order], rb.outcome[r_order]
        l_sel = np.searchsorted(l_sorted_n, common)
        r_sel = np.searchsorted(r_sorted_n, common)
        idx = common
        l_out = l_sorted_out[l_sel]
        r_out = r_sorted_out[r_sel]
    else:
        m = min(len(lb), len(rb))
        if m == 0:
            raise CollationError("nothing to collate")
        idx = lb.n[:m]
        l_out = lb.outcome[:m]
        r_out = rb.outcome[:m]

    group = RunGroup(
        label=group_label,
        left_setting=lb.setting,
        right_setting=rb.setting,
        pair_index=np.asarray(idx, dtype=np.int64),
        left=np.asarray(l_out, dtype=np.int8),
        right=np.asarray(r_out, dtype=np.int8),
    )
    ds = RunDataset(
        canonical_pairs=((lb.setting, rb.setting),),
        groups=(group,),
        spec=None,
        meta={"schema_version": 1, "collation": strategy},
    )
    return CollationResult(
        dataset=ds,
        strategy=strategy,
        incomplete=tuple(incomplete),
        left_count=len(lb),
        right_count=len(rb),
    )


def inject_fault(kind: str, position: int, stream: Union[ReportBatch, Sequence[StationReport]]):
    """Deterministically mutate a report stream: drop, duplicate, or reorder.

    Returns the same representation as the input. ``reorder`` swaps the
    reports at ``position`` and ``position + 1``.
    """
    if isinstance(stream, ReportBatch):
        n = len(stream)
        _check_fault_position(kind, position, n)
        cols = {"n": stream.n, "outcome": stream.outcome}
        if stream.clock_ns is not None:
            cols["clock_ns"] = stream.clock_ns
        out = {}
        for name, arr in cols.items():
            if kind == "drop":
                out[name] = np.delete(arr, position)
            elif kind == "duplicate":
                out[name] = np.insert(arr, position + 1, arr[position])
            else:  # reorder
                swapped = arr.copy()
                swapped[position], swapped[position + 1] = arr[position + 1], arr[position]
                out[name] = swapped
        return ReportBatch(
            station=stream.station,
            setting=stream.setting,
            n=out["n"],
            outcome=out["outcome"],
            clock_ns=out.get("clock_ns"),
        )
    reports = list(stream)
    _check_fault_position(kind, position, len(reports))
    if kind == "drop":
        del reports[position]
    elif kind == "duplicate":
        reports.insert(position + 1, reports[position])
    else:
        reports[position], reports[position + 1] = reports[position + 1], reports[position]
    return reports


def _check_fault_position(kind: str, position: int, length: int) -> None:
    if kind not in ("drop", "duplicate", "reorder"):
        raise ValueError(f"unknown fault kind {kind!r}")
    last_ok = length - 2 if kind == "reorder" else length - 1
    if not 0 <= position <= last_ok:
        raise ValueError(f"fault position {position} out of range for a stream of {length}")


# ---------------------------------------------------------------------------
# Live collator


def collator_serve(
    sock: socket.socket | None = None,
    bind: tuple[str, int] | None = None,
    match: str = "pair-id",
    out_path=None,
    hwm: int = 100_000,
    timeout: float = 60.0,
) -> CollationResult:
    """Accept both stations, verify key agreement, join their reports.

    Refuses to collate unless the two stations' key digests are equal.
    The high-water mark bounds how far ahead one station may run before
    its connection stops being read (TCP backpressure); receipt resumes
    once the other wing catches up or finishes.
    """
    server = sock if sock is not None else make_server_socket(*(bind or ("127.0.0.1", 0)))
    server.settimeout(timeout)

    lock = threading.Condition()
    digests: dict[str, str] = {}
    reports: dict[str, list[StationReport]] = {"L": [], "R": []}
    done: dict[str, bool] = {"L": False, "R": False}
    partial = {"flag": False}
    max_lead = {"L": 0, "R": 0}
    errors: list[Exception] = []

    def other(station: str) -> str:
        return "R" if station == "L" else "L"

    def reader(conn: socket.socket, station_holder: list) -> None:
        station = None
        try:
            conn.settimeout(timeout)
            first = recv_frame(conn)
            if validate_message(first, COLLATOR_RECEIVABLE_SCHEMAS) != "key_digest":
                raise SchemaError("station must announce its key digest first")
            station = first["station"]
            if station not in ("L", "R"):
                raise SchemaError(f"unknown station {station!r}")
            station_holder.append(station)
            with lock:
                if station in digests:
                    raise SchemaError(f"duplicate station {station!r}")
                digests[station] = first["digest_hex"]
                lock.notify_all()
                while len(digests) < 2:
                    if not lock.wait(timeout=timeout):
                        raise ProtocolError("timed out waiting for the other station's key digest")
                if digests["L"] != digests["R"]:
                    raise CollationError("gauge key digests differ between stations; refusing to collate")
            while True:
                msg = recv_frame(conn)
                if msg is None:
                    with lock:
                        partial["flag"] = True
                        done[station] = True
                        lock.notify_all()
                    return
                kind = validate_message(msg, COLLATOR_RECEIVABLE_SCHEMAS)
                if kind == "end":
                    with lock:
                        done[station] = True
                        lock.notify_all()
                    return
                if kind != "report" or msg["station"] != station:
                    raise SchemaError(f"unexpected {kind!r} message from station {station!r}")
                report = StationReport.from_wire(msg)
                with lock:
                    # Backpressure: stop reading while this wing leads too far.
                    while (
                        len(reports[station]) - len(reports[other(station)]) >= hwm
                        and not done[other(station)]
                    ):
                        lock.wait(timeout=0.1)
                    reports[station].append(report)
                    lead = len(reports[station]) - len(reports[other(station)])
                    max_lead[station] = max(max_lead[station], lead)
                    lock.notify_all()
        except Exception as exc:  # propagated after join
            with lock:
                errors.append(exc)
                if station is not None:
                    done[station] = True
                partial["flag"] = True
                lock.notify_all()
        finally:
            conn.close()

    threads = []
    try:
        for _ in range(2):
            conn, _addr = server.accept()
            holder: list = []
            th = threading.Thread(target=reader, args=(conn, holder), daemon=True)
            th.start()
            threads.append(th)
        for th in threads:
            th.join(timeout=timeout * 4)
    finally:
        server.close()

    for exc in errors:
        raise exc
    if not reports["L"] or not reports["R"]:
        raise CollationError("one or both stations sent no reports")

    result = collate(reports["L"], reports["R"], strategy=match)
    result.digests = dict(digests)
    result.partial = partial["flag"]
    result.dataset.meta["max_lead"] = dict(max_lead)
    if out_path is not None:
        from .formats import write_run_dataset

        write_run_dataset(result.dataset, out_path)
    return result
