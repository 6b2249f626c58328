"""Unidirectional IP flow records and their preprocessing.

Flow files come from external collectors as CSV or JSON-lines.  The canonical
CSV column order is ``t_start,t_end,src_ip,dst_ip,src_port,dst_port,proto``
with timestamps in integer milliseconds since the epoch; RFC 3339 strings are
accepted and converted on read.  Bidirectional records can be split into two
unidirectional flows, and traffic is filtered down to TCP/UDP before any
graph is built.  Self-loop flows (equal endpoints) are dropped during
parsing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from ipaddress import ip_address
from typing import Iterable

CSV_COLUMNS = ("t_start", "t_end", "src_ip", "dst_ip", "src_port", "dst_port", "proto")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)


class Proto(str, Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"

    @classmethod
    def from_token(cls, token: str) -> "Proto":
        text = token.strip().upper()
        if text in ("TCP", "6"):
            return cls.TCP
        if text in ("UDP", "17"):
            return cls.UDP
        return cls.OTHER


class FlowFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"


class SplitMode(str, Enum):
    SAME_TIMESTAMPS = "same"
    DISTINCT_TIMESTAMPS = "distinct"


@dataclass(frozen=True, slots=True)
class FlowRecord:
    """One unidirectional IP flow: 5-tuple plus start/end in milliseconds."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: Proto
    t_start: int
    t_end: int

    def sort_key(self):
        return (self.t_start, self.t_end, self.src_ip, self.dst_ip,
                self.src_port, self.dst_port, self.proto.value)


@dataclass(frozen=True, slots=True)
class BiflowRecord:
    """A paired bidirectional connection; byte/packet counts are optional
    passthrough and unused downstream."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: Proto
    t_start: int
    t_end: int
    fwd_bytes: int | None = None
    rev_bytes: int | None = None
    fwd_packets: int | None = None
    rev_packets: int | None = None


@dataclass
class ParseReport:
    """Recoverable per-line errors and drop counters from one parse run."""

    errors: list[tuple[int, str]]
    parsed: int = 0
    dropped_self_loops: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


def _parse_timestamp(token) -> int:
    """Integer milliseconds, or an RFC 3339 datetime converted to them."""
    if isinstance(token, int) and not isinstance(token, bool):
        return token
    text = str(token).strip()
    try:
        return int(text)
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    try:
        stamp = datetime.fromisoformat(iso)
    except ValueError:
        raise ValueError(f"invalid timestamp {token!r}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return (stamp - _EPOCH) // _MS


def _parse_address(token) -> str:
    try:
        return str(ip_address(str(token).strip()))
    except ValueError:
        raise ValueError(f"invalid IP address {token!r}") from None


def _parse_port(token, name: str) -> int:
    try:
        port = int(token)
    except (TypeError, ValueError):
        raise ValueError(f"invalid {name} {token!r}") from None
    if not 0 <= port <= 65535:
        raise ValueError(f"{name} {port} out of range 0-65535")
    return port


def _make_flow(t_start, t_end, src, dst, src_port, dst_port, proto) -> FlowRecord | None:
    """Validated FlowRecord, or None for a dropped self-loop."""
    ts = _parse_timestamp(t_start)
    te = _parse_timestamp(t_end)
    if te < ts:
        raise ValueError(f"t_end {te} earlier than t_start {ts}")
    src_ip = _parse_address(src)
    dst_ip = _parse_address(dst)
    sp = _parse_port(src_port, "src_port")
    dp = _parse_port(dst_port, "dst_port")
    if src_ip == dst_ip:
        return None
    return FlowRecord(src_ip, dst_ip, sp, dp, Proto.from_token(str(proto)), ts, te)


def _looks_like_header(line: str) -> bool:
    return line.split(",", 1)[0].strip().lower() == "t_start"


def parse_flows(lines: Iterable[str], fmt: FlowFormat | str = FlowFormat.CSV) -> tuple[list[FlowRecord], ParseReport]:
    """Parse flow records from an iterable of text lines.

    Invalid lines are collected in the report with their 1-based line number;
    valid records keep the input order.  An optional CSV header line is
    skipped.
    """
    fmt = FlowFormat(fmt)
    flows: list[FlowRecord] = []
    report = ParseReport(errors=[])
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if fmt is FlowFormat.CSV and lineno == 1 and _looks_like_header(line):
            continue
        try:
            if fmt is FlowFormat.CSV:
                cells = [c.strip() for c in line.split(",")]
                if len(cells) != len(CSV_COLUMNS):
                    raise ValueError(f"expected {len(CSV_COLUMNS)} columns, got {len(cells)}")
                flow = _make_flow(*cells)
            else:
                obj = json.loads(line)
                missing = [c for c in CSV_COLUMNS if c not in obj]
                if missing:
                    raise ValueError(f"missing fields: {', '.join(missing)}")
                flow = _make_flow(obj["t_start"], obj["t_end"], obj["src_ip"], obj["dst_ip"],
                                  obj["src_port"], obj["dst_port"], obj["proto"])
        except ValueError as exc:
            report.errors.append((lineno, str(exc)))
            continue
        if flow is None:
            report.dropped_self_loops += 1
        else:
            flows.append(flow)
            report.parsed += 1
    return flows, report


_BIFLOW_EXTRA = ("fwd_bytes", "rev_bytes", "fwd_packets", "rev_packets")


def parse_biflows(lines: Iterable[str], fmt: FlowFormat | str = FlowFormat.CSV) -> tuple[list[BiflowRecord], ParseReport]:
    """Parse biflow records; CSV rows carry the seven flow columns optionally
    followed by four byte/packet count columns."""
    fmt = FlowFormat(fmt)
    records: list[BiflowRecord] = []
    report = ParseReport(errors=[])
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if fmt is FlowFormat.CSV and lineno == 1 and _looks_like_header(line):
            continue
        try:
            if fmt is FlowFormat.CSV:
                cells = [c.strip() for c in line.split(",")]
                if len(cells) not in (len(CSV_COLUMNS), len(CSV_COLUMNS) + 4):
                    raise ValueError(f"expected 7 or 11 columns, got {len(cells)}")
                counts = [int(c) for c in cells[7:]] if len(cells) > 7 else [None] * 4
                base = _make_flow(*cells[:7])
            else:
                obj = json.loads(line)
                missing = [c for c in CSV_COLUMNS if c not in obj]
                if missing:
                    raise ValueError(f"missing fields: {', '.join(missing)}")
                counts = [obj.get(k) for k in _BIFLOW_EXTRA]
                base = _make_flow(obj["t_start"], obj["t_end"], obj["src_ip"], obj["dst_ip"],
                                  obj["src_port"], obj["dst_port"], obj["proto"])
        except ValueError as exc:
            report.errors.append((lineno, str(exc)))
            continue
        if base is None:
            report.dropped_self_loops += 1
            continue
        records.append(BiflowRecord(base.src_ip, base.dst_ip, base.src_port, base.dst_port,
                                    base.proto, base.t_start, base.t_end, *counts))
        report.parsed += 1
    return records, report


def biflow_to_uniflows(biflow: BiflowRecord, mode: SplitMode | str) -> tuple[FlowRecord, FlowRecord]:
    """Split a biflow into forward and reverse unidirectional flows.

    The forward flow keeps the biflow 5-tuple; the reverse swaps addresses
    and ports.  SAME_TIMESTAMPS copies the interval to both directions.
    DISTINCT_TIMESTAMPS starts the reverse 1 ms after the forward start, so
    the forward flow always sorts first; for sub-millisecond biflows the
    reverse start is clamped to t_end to keep the interval valid.
    """
    mode = SplitMode(mode)
    fwd = FlowRecord(biflow.src_ip, biflow.dst_ip, biflow.src_port, biflow.dst_port,
                     biflow.proto, biflow.t_start, biflow.t_end)
    if mode is SplitMode.SAME_TIMESTAMPS:
        rev_start = biflow.t_start
    else:
        rev_start = min(biflow.t_start + 1, biflow.t_end)
    rev = FlowRecord(biflow.dst_ip, biflow.src_ip, biflow.dst_port, biflow.src_port,
                     biflow.proto, rev_start, biflow.t_end)
    return fwd, rev


def filter_tcp_udp(flows: Iterable[FlowRecord]) -> list[FlowRecord]:
    """Keep only TCP and UDP flows, preserving order."""
    return [f for f in flows if f.proto is not Proto.OTHER]


def flow_to_csv_line(flow: FlowRecord) -> str:
    return (f"{flow.t_start},{flow.t_end},{flow.src_ip},{flow.dst_ip},"
            f"{flow.src_port},{flow.dst_port},{flow.proto.value}")


def write_flows_csv(flows: Iterable[FlowRecord], path, header: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(CSV_COLUMNS) + "\n")
        for flow in flows:
            fh.write(flow_to_csv_line(flow) + "\n")


def read_flows_csv(path) -> tuple[list[FlowRecord], ParseReport]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_flows(fh, FlowFormat.CSV)


def flow_to_dict(flow: FlowRecord) -> dict:
    return {"src_ip": flow.src_ip, "dst_ip": flow.dst_ip,
            "src_port": flow.src_port, "dst_port": flow.dst_port,
            "proto": flow.proto.value, "t_start": flow.t_start, "t_end": flow.t_end}


def flow_from_dict(obj: dict) -> FlowRecord:
    return FlowRecord(obj["src_ip"], obj["dst_ip"], int(obj["src_port"]), int(obj["dst_port"]),
                      Proto(obj["proto"]), int(obj["t_start"]), int(obj["t_end"]))
