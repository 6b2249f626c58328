"""Brute-force ground truth over the full preprocessed flow set.

Five dependency kinds are enumerated from raw flows (not from the sampled
graph):

* DD  -- a pair connected by >= n_t flows sharing the same 5-tuple.
* RR  -- a subject asks one server (request plus port-swapped reply) and then
         contacts another server within epsilon of the reply's end; the
         second server depends on the first.
* RR3 -- the same chain with a second answered hop before the final request.
* TD  -- two direct dependencies chained by interval containment of their
         witness flows (a request to the middle host encloses the middle
         host's own onward request), making the head depend on the tail.
* TD3 -- three chained direct dependencies with nested containment.

Witness counts are deduplicated by the initiating flow, so one initiating
flow contributes at most one witness to a given record.  Chains never revisit
an address, and distinct middle paths yield distinct TD/TD3 records.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConfigError
from .flows import FlowRecord

_KIND_ORDER = {"DD": 0, "RR": 1, "RR3": 2, "TD": 3, "TD3": 4}


class DepKind(str, Enum):
    DD = "DD"
    RR = "RR"
    RR3 = "RR3"
    TD = "TD"
    TD3 = "TD3"


@dataclass(frozen=True)
class OracleConfig:
    """Thresholds: ``n_t_dd`` covers DD and TD records, ``n_t_rr`` covers RR
    and RR3; ``epsilon`` bounds the request gap in milliseconds."""

    n_t_dd: int = 10
    n_t_rr: int = 10
    epsilon: int = 1000
    max_chain_vertices: int = 4

    def __post_init__(self):
        problems = []
        if self.n_t_dd < 1:
            problems.append("n_t_dd must be >= 1")
        if self.n_t_rr < 1:
            problems.append("n_t_rr must be >= 1")
        if self.epsilon < 0:
            problems.append("epsilon must be >= 0")
        if self.max_chain_vertices != 4:
            problems.append("only chains up to four addresses are supported")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class DependencyRecord:
    """``src`` is the dependent address, ``dst`` the depended-on one; ``via``
    lists the middle addresses for transitive records."""

    kind: DepKind
    src: str
    dst: str
    witness_count: int
    via: tuple[str, ...] = ()


def record_key(rec: DependencyRecord):
    return (_KIND_ORDER[rec.kind.value], rec.src, rec.dst, rec.via)


def enumerate_dd(flows: Sequence[FlowRecord], cfg: OracleConfig) -> list[DependencyRecord]:
    """Group flows by 5-tuple; every group reaching ``n_t_dd`` contributes its
    size to the pair's record, so qualifying 5-tuples on the same pair
    collapse into one DD with summed witnesses."""
    groups = Counter((f.src_ip, f.dst_ip, f.src_port, f.dst_port, f.proto) for f in flows)
    pair_witnesses: Counter = Counter()
    for (src, dst, _sp, _dp, _proto), count in groups.items():
        if count >= cfg.n_t_dd:
            pair_witnesses[(src, dst)] += count
    records = [DependencyRecord(DepKind.DD, src, dst, w)
               for (src, dst), w in pair_witnesses.items()]
    return sorted(records, key=record_key)


def _reply_pairs(flows: Sequence[FlowRecord], epsilon: int) -> list[tuple[int, int]]:
    """(initiator, reply) index pairs: reversed addresses with swapped ports,
    reply starting no earlier than the initiator, ends within epsilon."""
    by_key: dict[tuple, list[tuple[int, int, int]]] = defaultdict(list)
    for i, f in enumerate(flows):
        by_key[(f.src_ip, f.dst_ip, f.src_port, f.dst_port)].append((f.t_start, f.t_end, i))
    for lst in by_key.values():
        lst.sort()
    pairs: list[tuple[int, int]] = []
    for i, f in enumerate(flows):
        candidates = by_key.get((f.dst_ip, f.src_ip, f.dst_port, f.src_port))
        if not candidates:
            continue
        # reply start is bounded by [t_start, t_end + epsilon] since its own
        # end must stay within epsilon of ours
        lo = bisect_left(candidates, (f.t_start,))
        hi = bisect_left(candidates, (f.t_end + epsilon + 1,))
        for _ts, te, j in candidates[lo:hi]:
            if abs(f.t_end - te) <= epsilon:
                pairs.append((i, j))
    return pairs


def enumerate_rr(flows: Sequence[FlowRecord], cfg: OracleConfig) -> tuple[list[DependencyRecord], list[DependencyRecord]]:
    """RR and RR3 records.

    An RR witness is (subject -> S1 request, port-swapped reply, then a
    subject -> S2 request starting within epsilon after the reply ends),
    yielding the dependency of S2 on S1.  RR3 inserts a second answered hop:
    the follow-up request is itself answered and a third request leaves
    within epsilon of that reply, yielding the dependency of the final target
    on S1.  Chain addresses are pairwise distinct.
    """
    flows = list(flows)
    eps = cfg.epsilon
    by_src: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for i, f in enumerate(flows):
        by_src[f.src_ip].append((f.t_start, i))
    for lst in by_src.values():
        lst.sort()

    # answered hops per subject, ordered by initiator start for chain lookups
    entries: dict[str, list[tuple[int, int, int, str]]] = defaultdict(list)
    for i, j in _reply_pairs(flows, eps):
        f1, f2 = flows[i], flows[j]
        entries[f1.src_ip].append((f1.t_start, f2.t_end, i, f1.dst_ip))
    for lst in entries.values():
        lst.sort()

    rr_wits: dict[tuple[str, str], set[int]] = defaultdict(set)
    rr3_wits: dict[tuple[str, str], set[int]] = defaultdict(set)
    for subject, hop_list in entries.items():
        starts = by_src[subject]
        for _t1, reply_end, init_idx, server1 in hop_list:
            lo = bisect_left(starts, (reply_end,))
            hi = bisect_left(starts, (reply_end + eps + 1,))
            for _ts, k in starts[lo:hi]:
                target = flows[k].dst_ip
                if target not in (subject, server1):
                    rr_wits[(target, server1)].add(init_idx)
            lo2 = bisect_left(hop_list, (reply_end,))
            hi2 = bisect_left(hop_list, (reply_end + eps + 1,))
            for _t1b, reply_end2, _idx2, server2 in hop_list[lo2:hi2]:
                if server2 in (subject, server1):
                    continue
                lo3 = bisect_left(starts, (reply_end2,))
                hi3 = bisect_left(starts, (reply_end2 + eps + 1,))
                for _ts, k in starts[lo3:hi3]:
                    target = flows[k].dst_ip
                    if target not in (subject, server1, server2):
                        rr3_wits[(target, server1)].add(init_idx)

    rr = [DependencyRecord(DepKind.RR, s2, s1, len(w))
          for (s2, s1), w in rr_wits.items() if len(w) >= cfg.n_t_rr]
    rr3 = [DependencyRecord(DepKind.RR3, s3, s1, len(w))
           for (s3, s1), w in rr3_wits.items() if len(w) >= cfg.n_t_rr]
    return sorted(rr, key=record_key), sorted(rr3, key=record_key)


def _contained_span(intervals: list[tuple[int, int]], outer: tuple[int, int]) -> list[tuple[int, int]]:
    """Intervals starting within the outer interval (sorted input)."""
    lo = bisect_left(intervals, (outer[0],))
    hi = bisect_left(intervals, (outer[1] + 1,))
    return intervals[lo:hi]


def enumerate_td(flows: Sequence[FlowRecord], cfg: OracleConfig,
                 dd_records: Sequence[DependencyRecord] | None = None) -> tuple[list[DependencyRecord], list[DependencyRecord]]:
    """TD and TD3 records over the DD pairs.

    A TD witness for DD(A,B) chained with DD(B,C) is an (A,B) flow that
    temporally contains some (B,C) flow; TD3 nests a third hop inside the
    second.  Witnesses count distinct initiating (A,B) flows.  Records are
    emitted per middle path.
    """
    flows = list(flows)
    dd = dd_records if dd_records is not None else enumerate_dd(flows, cfg)
    dd_pairs = {(r.src, r.dst) for r in dd}
    by_pair: dict[tuple[str, str], list[tuple[int, int]]] = defaultdict(list)
    for f in flows:
        if (f.src_ip, f.dst_ip) in dd_pairs:
            by_pair[(f.src_ip, f.dst_ip)].append((f.t_start, f.t_end))
    for lst in by_pair.values():
        lst.sort()
    successors: dict[str, list[str]] = defaultdict(list)
    for a, b in dd_pairs:
        successors[a].append(b)
    for lst in successors.values():
        lst.sort()

    td: list[DependencyRecord] = []
    td3: list[DependencyRecord] = []
    for a, b in sorted(dd_pairs):
        outer_flows = by_pair[(a, b)]
        for c in successors.get(b, ()):
            if c == a:
                continue
            inner_flows = by_pair[(b, c)]
            witnesses = 0
            for outer in outer_flows:
                if any(te <= outer[1] for _ts, te in _contained_span(inner_flows, outer)):
                    witnesses += 1
            if witnesses >= cfg.n_t_dd:
                td.append(DependencyRecord(DepKind.TD, a, c, witnesses, via=(b,)))
            for tail in successors.get(c, ()):
                if tail in (a, b, c):
                    continue
                third_flows = by_pair[(c, tail)]
                witnesses3 = 0
                for outer in outer_flows:
                    hit = False
                    for mid in _contained_span(inner_flows, outer):
                        if mid[1] > outer[1]:
                            continue
                        if any(te <= mid[1] for _ts, te in _contained_span(third_flows, mid)):
                            hit = True
                            break
                    if hit:
                        witnesses3 += 1
                if witnesses3 >= cfg.n_t_dd:
                    td3.append(DependencyRecord(DepKind.TD3, a, tail, witnesses3, via=(b, c)))
    return sorted(td, key=record_key), sorted(td3, key=record_key)


def enumerate_all(flows: Sequence[FlowRecord], cfg: OracleConfig) -> list[DependencyRecord]:
    flows = list(flows)
    dd = enumerate_dd(flows, cfg)
    rr, rr3 = enumerate_rr(flows, cfg)
    td, td3 = enumerate_td(flows, cfg, dd_records=dd)
    return dd + rr + rr3 + td + td3


def write_ground_truth(records: Iterable[DependencyRecord], path) -> None:
    """CSV dump (kind, src, dst, witness_count); middle paths are not
    serialized, so records may repeat an endpoint pair."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "src", "dst", "witness_count"])
        for rec in records:
            writer.writerow([rec.kind.value, rec.src, rec.dst, rec.witness_count])


def read_ground_truth(path) -> list[DependencyRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and header[:1] != ["kind"]:
            fh.seek(0)
            reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            kind, src, dst, count = row
            records.append(DependencyRecord(DepKind(kind), src, dst, int(count)))
    return records
