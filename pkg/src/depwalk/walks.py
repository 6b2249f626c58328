"""Time-constrained random walks over the communication multigraph.

A positive walk starts at every vertex that has outgoing edges.  The second
vertex is drawn uniformly from out-neighbours whose pair holds at least
``n_t`` sampled flows (falling back to all out-neighbours).  From the third
vertex on, a candidate ``w`` qualifies when some edge instance satisfies at
least one of four conditions against the edge recorded on the previous step:

* ``LR_OPEN``: the candidate flow lies inside the previous flow's interval
  (a server contacts a second server while still serving the original
  request).
* ``LR_RETURN``: the previous flow lies inside the candidate flow and the
  walk already traversed the opposite direction of the candidate pair
  earlier; this is the return leg of a nested request chain.
* ``RR_OPEN``: the candidate flow leaves the previous flow's *source* within
  ``epsilon`` after the previous flow ended (ask one server, then contact
  another; the repeated middle vertex is elided, so the candidate edge
  originates two steps back).
* ``REV_RETURN``: the candidate vertex is the previous flow's source and the
  candidate flow is its port-swapped reply ending within ``epsilon``.

The pair carrying the candidate edge must itself hold at least ``n_t``
sampled flows.  Candidates are chosen uniformly.  When none qualifies the
walk falls back to the ``n_t`` threshold rule over out-neighbours, then to
any out-neighbour, recording ``FALLBACK_THRESHOLD`` / ``FALLBACK_ANY`` in the
condition trace.  A walk stops early only at a vertex with no outgoing
edges; walks that end shorter than three vertices are discarded.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConfigError, NegativeWalkError
from .flows import FlowRecord, flow_from_dict, flow_to_dict
from .graph import CommGraph
from .seeds import derive_seed

log = logging.getLogger(__name__)


class Condition(str, Enum):
    LR_OPEN = "LR_OPEN"
    LR_RETURN = "LR_RETURN"
    RR_OPEN = "RR_OPEN"
    REV_RETURN = "REV_RETURN"
    FALLBACK_THRESHOLD = "FALLBACK_THRESHOLD"
    FALLBACK_ANY = "FALLBACK_ANY"


class WalkLabel(str, Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 5
    walks_per_vertex: int = 10
    epsilon: int = 1000
    n_t: int = 10
    rng_seed: int = 0
    neg_retry_factor: int = 100

    def __post_init__(self):
        problems = []
        if self.walk_length < 3:
            problems.append("walk_length must be >= 3")
        if self.walks_per_vertex < 1:
            problems.append("walks_per_vertex must be >= 1")
        if self.epsilon < 0:
            problems.append("epsilon must be >= 0")
        if self.n_t < 1:
            problems.append("n_t must be >= 1")
        if self.neg_retry_factor < 1:
            problems.append("neg_retry_factor must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class RandomWalk:
    """Ordered vertex sequence with the chosen edge per step for audit.

    ``step_edges[k]`` is the graph edge instance recorded when vertex ``k+1``
    was appended; for RR_OPEN steps it originates at the vertex two positions
    back rather than the immediate predecessor.  ``condition_trace[k]`` holds
    the satisfied condition IDs (or the fallback marker) for the step that
    appended vertex ``k+2``.  Negative walks carry no edges and no trace.
    """

    vertices: tuple[str, ...]
    step_edges: tuple[FlowRecord, ...]
    label: WalkLabel
    condition_trace: tuple[frozenset[Condition], ...]


def cond_lr_open(e_prev: FlowRecord, e_next: FlowRecord) -> bool:
    """Candidate flow temporally contained in the previous flow."""
    return e_prev.t_start <= e_next.t_start <= e_next.t_end <= e_prev.t_end


def cond_lr_return(e_prev: FlowRecord, e_next: FlowRecord,
                   prefix: Sequence[str], candidate: str) -> bool:
    """Previous flow contained in the candidate flow, and the walk already
    holds the candidate pair's opposite direction at an earlier position.

    ``prefix`` is the walk so far (its last element is the current vertex);
    the earlier occurrence must be a consecutive pair (candidate, current)
    strictly before the triplet under evaluation.
    """
    if not (e_next.t_start <= e_prev.t_start <= e_prev.t_end <= e_next.t_end):
        return False
    current = prefix[-1]
    return any(prefix[j] == candidate and prefix[j + 1] == current
               for j in range(len(prefix) - 2))


def cond_rr_open(e_prev: FlowRecord, e_next: FlowRecord, epsilon: int) -> bool:
    """Candidate flow starts after the previous flow ends, within epsilon."""
    gap = e_next.t_start - e_prev.t_end
    return 0 <= gap <= epsilon


def cond_rev_return(e_fwd: FlowRecord, e_rev: FlowRecord, epsilon: int) -> bool:
    """Port-swapped reply over the reversed pair: the reply starts no earlier
    than the forward flow and the two flows end within epsilon of each
    other."""
    return (e_fwd.src_port == e_rev.dst_port
            and e_fwd.dst_port == e_rev.src_port
            and e_fwd.t_start <= e_rev.t_start
            and abs(e_fwd.t_end - e_rev.t_end) <= epsilon)


def _condition_candidates(g: CommGraph, cfg: WalkConfig, prefix: list[str],
                          e_prev: FlowRecord) -> dict[str, tuple[set[Condition], list[FlowRecord]]]:
    """Map candidate vertex -> (satisfied conditions, satisfying instances).

    LR and reply candidates are scanned over edges leaving the current
    vertex; RR candidates over edges leaving the previous flow's source,
    skipping the current vertex.  Either way the scanned pair must hold at
    least ``n_t`` sampled flows.
    """
    current = prefix[-1]
    found: dict[str, tuple[set[Condition], list[FlowRecord]]] = {}

    def add(vertex: str, cond: Condition, inst: FlowRecord) -> None:
        conds, insts = found.setdefault(vertex, (set(), []))
        conds.add(cond)
        if inst not in insts:
            insts.append(inst)

    for w in g.out_neighbors(current):
        if g.pair_flow_count(current, w) < cfg.n_t:
            continue
        rev_possible = w == e_prev.src_ip
        for inst in g.edge_instances(current, w):
            if cond_lr_open(e_prev, inst):
                add(w, Condition.LR_OPEN, inst)
            if cond_lr_return(e_prev, inst, prefix, w):
                add(w, Condition.LR_RETURN, inst)
            if rev_possible and cond_rev_return(e_prev, inst, cfg.epsilon):
                add(w, Condition.REV_RETURN, inst)
    prev_src = e_prev.src_ip
    for w in g.out_neighbors(prev_src):
        if w == current or g.pair_flow_count(prev_src, w) < cfg.n_t:
            continue
        for inst in g.edge_instances(prev_src, w):
            if cond_rr_open(e_prev, inst, cfg.epsilon):
                add(w, Condition.RR_OPEN, inst)
    return found


def _single_walk(g: CommGraph, cfg: WalkConfig, start: str, rng: random.Random) -> RandomWalk:
    vertices = [start]
    edges: list[FlowRecord] = []
    trace: list[frozenset[Condition]] = []

    outs = g.out_neighbors(start)
    qualified = [u for u in outs if g.pair_flow_count(start, u) >= cfg.n_t]
    nxt = rng.choice(qualified if qualified else list(outs))
    edges.append(rng.choice(list(g.edge_instances(start, nxt))))
    vertices.append(nxt)

    while len(vertices) < cfg.walk_length:
        current = vertices[-1]
        outs = g.out_neighbors(current)
        if not outs:
            break
        candidates = _condition_candidates(g, cfg, vertices, edges[-1])
        if candidates:
            w = rng.choice(sorted(candidates))
            conds, instances = candidates[w]
            chosen = rng.choice(instances)
            trace.append(frozenset(conds))
        else:
            qualified = [u for u in outs if g.pair_flow_count(current, u) >= cfg.n_t]
            if qualified:
                w = rng.choice(qualified)
                trace.append(frozenset({Condition.FALLBACK_THRESHOLD}))
            else:
                w = rng.choice(list(outs))
                trace.append(frozenset({Condition.FALLBACK_ANY}))
            chosen = rng.choice(list(g.edge_instances(current, w)))
        vertices.append(w)
        edges.append(chosen)
    return RandomWalk(tuple(vertices), tuple(edges), WalkLabel.POSITIVE, tuple(trace))


def generate_walks(g: CommGraph, cfg: WalkConfig) -> list[RandomWalk]:
    """``walks_per_vertex`` positive walks from every vertex with outgoing
    edges; walks cut short of three vertices by a dead end are dropped.

    Each start vertex derives its own RNG stream from (seed, vertex), so the
    output does not depend on vertex scheduling order.
    """
    walks: list[RandomWalk] = []
    for v in g.vertices:
        if g.out_degree(v) == 0:
            continue
        rng = random.Random(derive_seed(cfg.rng_seed, f"walk:{v}"))
        for _ in range(cfg.walks_per_vertex):
            walk = _single_walk(g, cfg, v, rng)
            if len(walk.vertices) >= 3:
                walks.append(walk)
    return walks


def generate_negative_walks(g: CommGraph, positives: Sequence[RandomWalk],
                            cfg: WalkConfig) -> list[RandomWalk]:
    """One negative walk per positive walk, of the same length.

    Vertices are drawn uniformly (never repeating the immediate predecessor,
    since self-pairs are not meaningful non-edges) until at least one
    consecutive pair is not an edge of the graph.  Each walk gets a retry
    budget of ``neg_retry_factor * length`` draws.
    """
    if not positives:
        return []
    verts = g.vertices
    if len(verts) < 2:
        raise NegativeWalkError("need at least two vertices to draw negative walks")
    index = {v: i for i, v in enumerate(verts)}
    rng = random.Random(derive_seed(cfg.rng_seed, "negative-walks"))
    negatives: list[RandomWalk] = []
    for pos in positives:
        length = len(pos.vertices)
        budget = cfg.neg_retry_factor * length
        for _ in range(budget):
            seq = [verts[rng.randrange(len(verts))]]
            while len(seq) < length:
                j = rng.randrange(len(verts) - 1)
                if j >= index[seq[-1]]:
                    j += 1
                seq.append(verts[j])
            if any(not g.has_edge(a, b) for a, b in zip(seq, seq[1:])):
                negatives.append(RandomWalk(tuple(seq), (), WalkLabel.NEGATIVE, ()))
                break
        else:
            raise NegativeWalkError(
                f"no non-existing walk of length {length} found within {budget} attempts")
    return negatives


def write_walks_jsonl(walks: Iterable[RandomWalk], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for walk in walks:
            obj = {
                "label": walk.label.value,
                "vertices": list(walk.vertices),
                "condition_trace": [sorted(c.value for c in conds) for conds in walk.condition_trace],
                "step_edges": [flow_to_dict(e) for e in walk.step_edges],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_walks_jsonl(path) -> list[RandomWalk]:
    walks = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            walks.append(RandomWalk(
                vertices=tuple(obj["vertices"]),
                step_edges=tuple(flow_from_dict(e) for e in obj["step_edges"]),
                label=WalkLabel(obj["label"]),
                condition_trace=tuple(frozenset(Condition(c) for c in conds)
                                      for conds in obj["condition_trace"]),
            ))
    return walks
