"""Shared fixture builders for the test suite."""

from __future__ import annotations

import random

import pytest

from depwalk.flows import FlowRecord, Proto
from depwalk.graph import CommGraph


def flow(src, dst, t_start, t_end, sport=40000, dport=80, proto=Proto.TCP) -> FlowRecord:
    return FlowRecord(src, dst, sport, dport, proto, t_start, t_end)


def graph_from(flows, vertices=None) -> CommGraph:
    if vertices is None:
        vertices = {f.src_ip for f in flows} | {f.dst_ip for f in flows}
    return CommGraph.from_flows(vertices, flows)


def repeat_pair(src, dst, n, t_start, t_end, sport=40000, dport=80, spread=0):
    """n parallel edges on one pair; ``spread`` shifts each copy in time."""
    return [flow(src, dst, t_start + i * spread, t_end + i * spread, sport, dport)
            for i in range(n)]


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
