"""Communication multigraph: address selection and reservoir edge sampling."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from ipaddress import ip_address, ip_network
from typing import Iterable, Iterator

from .errors import ConfigError
from .flows import FlowRecord, flow_from_dict, flow_to_dict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    """Vertex selection and edge reservoir parameters.

    Addresses inside ``internal_prefixes`` count as internal; everything else
    (including unparseable tokens) is external.  ``exclude_scanners`` drops
    addresses whose initiated traffic is mostly unanswered one-way pairs
    before ranking, a guard against scan-heavy sources.
    """

    n_internal: int
    m_external: int
    k_edges: int
    internal_prefixes: tuple[str, ...] = ()
    rng_seed: int = 0
    exclude_scanners: bool = False
    scan_max_unanswered: float = 0.25

    def __post_init__(self):
        problems = []
        if self.n_internal < 0:
            problems.append("n_internal must be >= 0")
        if self.m_external < 0:
            problems.append("m_external must be >= 0")
        if self.k_edges < 1:
            problems.append("k_edges must be >= 1")
        if not 0.0 <= self.scan_max_unanswered <= 1.0:
            problems.append("scan_max_unanswered must be in [0, 1]")
        for prefix in self.internal_prefixes:
            try:
                ip_network(prefix, strict=False)
            except ValueError:
                problems.append(f"invalid CIDR prefix {prefix!r}")
        if problems:
            raise ConfigError("; ".join(problems))


def _is_internal(addr: str, networks) -> bool:
    try:
        parsed = ip_address(addr)
    except ValueError:
        return False
    return any(parsed in net for net in networks if net.version == parsed.version)


def _scanner_addresses(flows, cfg: SamplerConfig) -> set[str]:
    # A flow is "unanswered" when nothing in the batch travels the opposite
    # direction between the same two addresses.
    pairs = {(f.src_ip, f.dst_ip) for f in flows}
    unanswered: Counter = Counter()
    total: Counter = Counter()
    for f in flows:
        total[f.src_ip] += 1
        total[f.dst_ip] += 1
        if (f.dst_ip, f.src_ip) not in pairs:
            unanswered[f.src_ip] += 1
    return {a for a in total if unanswered[a] > cfg.scan_max_unanswered * total[a]}


def select_top_addresses(flows: Iterable[FlowRecord], cfg: SamplerConfig) -> set[str]:
    """The ``n_internal`` internal and ``m_external`` external addresses with
    the most flow appearances (as source or destination).

    Ties break toward the lexicographically smaller address.  When fewer
    distinct addresses exist than requested, everything available is returned
    and a warning is logged.
    """
    flows = list(flows)
    counts: Counter = Counter()
    for f in flows:
        counts[f.src_ip] += 1
        counts[f.dst_ip] += 1
    excluded = _scanner_addresses(flows, cfg) if cfg.exclude_scanners else set()
    networks = [ip_network(p, strict=False) for p in cfg.internal_prefixes]
    internal: list[str] = []
    external: list[str] = []
    for addr in counts:
        if addr in excluded:
            continue
        (internal if _is_internal(addr, networks) else external).append(addr)

    def top(addrs: list[str], wanted: int, kind: str) -> list[str]:
        ranked = sorted(addrs, key=lambda a: (-counts[a], a))[:wanted]
        if len(ranked) < wanted:
            log.warning("only %d %s addresses available (requested %d)", len(ranked), kind, wanted)
        return ranked

    return set(top(internal, cfg.n_internal, "internal")) | set(top(external, cfg.m_external, "external"))


class CommGraph:
    """Directed multigraph over selected addresses; parallel edges carry the
    flow attributes of the sampled flows."""

    def __init__(self, vertices: Iterable[str], pair_edges: dict[tuple[str, str], Iterable[FlowRecord]]):
        self.vertices: tuple[str, ...] = tuple(sorted(set(vertices)))
        vset = set(self.vertices)
        pairs: dict[tuple[str, str], tuple[FlowRecord, ...]] = {}
        for (src, dst), instances in sorted(pair_edges.items()):
            instances = tuple(sorted(instances, key=FlowRecord.sort_key))
            if not instances:
                continue
            if src not in vset or dst not in vset:
                raise ValueError(f"edge endpoint outside vertex set: {src}->{dst}")
            pairs[(src, dst)] = instances
        self._pairs = pairs
        out: dict[str, set[str]] = defaultdict(set)
        inn: dict[str, set[str]] = defaultdict(set)
        for src, dst in pairs:
            out[src].add(dst)
            inn[dst].add(src)
        self._out = {v: tuple(sorted(targets)) for v, targets in out.items()}
        self._in = {v: tuple(sorted(sources)) for v, sources in inn.items()}

    @classmethod
    def from_flows(cls, vertices: Iterable[str], flows: Iterable[FlowRecord]) -> "CommGraph":
        pair_edges: dict[tuple[str, str], list[FlowRecord]] = defaultdict(list)
        for f in flows:
            pair_edges[(f.src_ip, f.dst_ip)].append(f)
        return cls(vertices, pair_edges)

    def out_neighbors(self, v: str) -> tuple[str, ...]:
        return self._out.get(v, ())

    def in_neighbors(self, v: str) -> tuple[str, ...]:
        return self._in.get(v, ())

    def out_degree(self, v: str) -> int:
        return len(self._out.get(v, ()))

    def edge_instances(self, src: str, dst: str) -> tuple[FlowRecord, ...]:
        return self._pairs.get((src, dst), ())

    def pair_flow_count(self, src: str, dst: str) -> int:
        """Number of sampled parallel edges from src to dst (0 if absent)."""
        return len(self._pairs.get((src, dst), ()))

    def has_edge(self, src: str, dst: str) -> bool:
        return (src, dst) in self._pairs

    def pairs(self) -> Iterator[tuple[str, str]]:
        return iter(self._pairs)

    def all_edges(self) -> Iterator[FlowRecord]:
        for instances in self._pairs.values():
            yield from instances

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self._pairs.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommGraph):
            return NotImplemented
        return self.vertices == other.vertices and self._pairs == other._pairs

    __hash__ = None  # mutable-by-convention container semantics


def reservoir_sample_edges(flows: Iterable[FlowRecord], selected: set[str], cfg: SamplerConfig) -> CommGraph:
    """Uniform reservoir sample over flows whose endpoints are both selected.

    Classic single-reservoir sampling: the first ``k_edges`` eligible flows
    fill the reservoir, and the k-th eligible flow thereafter replaces a
    uniformly drawn slot with probability ``k_edges / k``.  After N eligible
    flows every one of them is retained with probability ``k_edges / N``.
    """
    if not selected:
        raise ValueError("selected address set is empty")
    rng = random.Random(cfg.rng_seed)
    reservoir: list[FlowRecord] = []
    seen = 0
    for f in flows:
        if f.src_ip not in selected or f.dst_ip not in selected:
            continue
        seen += 1
        if len(reservoir) < cfg.k_edges:
            reservoir.append(f)
        else:
            slot = rng.randrange(seen)
            if slot < cfg.k_edges:
                reservoir[slot] = f
    if seen == 0:
        log.warning("no flows with both endpoints among the %d selected addresses", len(selected))
    return CommGraph.from_flows(sorted(selected), reservoir)


def write_graph_jsonl(graph: CommGraph, path) -> None:
    """One edge per line with all attributes; the first line is the vertex
    manifest."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"vertices": list(graph.vertices)}, sort_keys=True) + "\n")
        for edge in graph.all_edges():
            fh.write(json.dumps(flow_to_dict(edge), sort_keys=True) + "\n")


def read_graph_jsonl(path) -> CommGraph:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise ValueError(f"{path}: empty graph file")
        manifest = json.loads(first)
        if "vertices" not in manifest:
            raise ValueError(f"{path}: missing vertex manifest on the first line")
        edges = [flow_from_dict(json.loads(line)) for line in fh if line.strip()]
    return CommGraph.from_flows(manifest["vertices"], edges)
