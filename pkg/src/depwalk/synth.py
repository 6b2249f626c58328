"""Synthetic flow traces with planted dependency structure.

Clients run sessions against a fixed home web server.  A session optionally
performs a name lookup first (request plus port-swapped reply, with the web
request following within half the configured epsilon) and optionally makes
the web server call its home database inside the client request's interval.
Source ports are fixed per role so repeated sessions share 5-tuples and
therefore materialise direct dependencies.  Noise flows use a disjoint
address block and fully random ports, so they never contaminate the planted
truth.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError
from .flows import FlowRecord, Proto
from .oracle import DepKind, DependencyRecord, record_key

_CLIENT_WEB_SPORT = 51000
_WEB_DB_SPORT = 52000
_CLIENT_DNS_SPORT = 50053


@dataclass(frozen=True)
class ScenarioConfig:
    n_clients: int = 10
    n_web: int = 1
    n_db: int = 1
    n_dns: int = 1
    session_rate: float = 1.0          # sessions per simulated second
    duration: float = 60.0             # simulated seconds
    lr_web_db: bool = True
    rr_dns_web: bool = True
    noise_flows: int = 0
    latency_ms: tuple[int, int] = (5, 50)
    epsilon_ms: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        problems = []
        for name in ("n_clients", "n_web", "n_db", "n_dns"):
            value = getattr(self, name)
            if not 0 <= value <= 250:
                problems.append(f"{name} must be in [0, 250]")
        if self.duration <= 0:
            problems.append("duration must be > 0")
        if self.session_rate < 0:
            problems.append("session_rate must be >= 0")
        if self.noise_flows < 0:
            problems.append("noise_flows must be >= 0")
        lo, hi = self.latency_ms
        if not 1 <= lo <= hi:
            problems.append("latency_ms must satisfy 1 <= min <= max")
        if self.epsilon_ms < 12:
            problems.append("epsilon_ms must be >= 12 to leave room for the reply gap")
        if problems:
            raise ConfigError("; ".join(problems))


def _block(prefix: int, count: int) -> list[str]:
    return [f"10.0.{prefix}.{i + 1}" for i in range(count)]


def generate(cfg: ScenarioConfig) -> tuple[list[FlowRecord], list[DependencyRecord]]:
    """Flows in session emission order followed by noise, plus the planted
    truth (witness counts are raw session counts; thresholds are the
    consumer's business)."""
    total_sessions = int(round(cfg.session_rate * cfg.duration))
    if total_sessions and (cfg.lr_web_db or cfg.rr_dns_web):
        if cfg.n_clients == 0 or cfg.n_web == 0:
            raise ConfigError("planted sessions need clients and web servers")
        if cfg.lr_web_db and cfg.n_db == 0:
            raise ConfigError("lr_web_db needs a database server")
        if cfg.rr_dns_web and cfg.n_dns == 0:
            raise ConfigError("rr_dns_web needs a name server")

    rng = random.Random(cfg.rng_seed)
    clients = _block(0, cfg.n_clients)
    webs = _block(1, cfg.n_web)
    dbs = _block(2, cfg.n_db)
    dnss = _block(3, cfg.n_dns)

    duration_ms = int(cfg.duration * 1000)
    lat_lo, lat_hi = cfg.latency_ms
    max_gap = max(1, cfg.epsilon_ms // 2 - 4)

    flows: list[FlowRecord] = []
    web_sessions: Counter = Counter()   # (client, web)
    lr_sessions: Counter = Counter()    # (client, web, db)
    rr_sessions: Counter = Counter()    # (client, dns, web)

    if cfg.lr_web_db or cfg.rr_dns_web:
        for s in range(total_sessions):
            ci = s % cfg.n_clients
            client = clients[ci]
            wi = ci % cfg.n_web
            web = webs[wi]
            t0 = rng.randrange(0, max(1, duration_ms))
            t_web = t0
            if cfg.rr_dns_web:
                dns = dnss[ci % cfg.n_dns]
                lookup_ms = rng.randrange(lat_lo, lat_hi + 1)
                reply_delay = rng.randrange(0, 3)
                reply_skew = rng.randrange(0, 3)
                request = FlowRecord(client, dns, _CLIENT_DNS_SPORT, 53, Proto.UDP,
                                     t0, t0 + lookup_ms)
                reply = FlowRecord(dns, client, 53, _CLIENT_DNS_SPORT, Proto.UDP,
                                   t0 + reply_delay, t0 + lookup_ms + reply_skew)
                flows += [request, reply]
                t_web = reply.t_end + rng.randrange(1, max_gap + 1)
                rr_sessions[(client, dns, web)] += 1
            service_ms = rng.randrange(lat_lo, lat_hi + 1)
            if cfg.lr_web_db:
                db = dbs[wi % cfg.n_db]
                lead = rng.randrange(1, 4)
                tail = rng.randrange(1, 4)
                flows.append(FlowRecord(client, web, _CLIENT_WEB_SPORT, 443, Proto.TCP,
                                        t_web, t_web + lead + service_ms + tail))
                flows.append(FlowRecord(web, db, _WEB_DB_SPORT, 5432, Proto.TCP,
                                        t_web + lead, t_web + lead + service_ms))
                lr_sessions[(client, web, db)] += 1
            else:
                flows.append(FlowRecord(client, web, _CLIENT_WEB_SPORT, 443, Proto.TCP,
                                        t_web, t_web + service_ms))
            web_sessions[(client, web)] += 1

    for _ in range(cfg.noise_flows):
        src = f"172.16.{rng.randrange(0, 256)}.{rng.randrange(1, 255)}"
        dst = src
        while dst == src:
            dst = f"172.16.{rng.randrange(0, 256)}.{rng.randrange(1, 255)}"
        t_start = rng.randrange(0, max(1, duration_ms))
        flows.append(FlowRecord(src, dst, rng.randrange(1024, 65536), rng.randrange(1, 65536),
                                rng.choice([Proto.TCP, Proto.UDP]),
                                t_start, t_start + rng.randrange(1, 5001)))

    return flows, _planted_truth(web_sessions, lr_sessions, rr_sessions)


def _planted_truth(web_sessions: Counter, lr_sessions: Counter,
                   rr_sessions: Counter) -> list[DependencyRecord]:
    direct: Counter = Counter()
    for (client, web), k in web_sessions.items():
        direct[(client, web)] += k
    for (client, web, db), k in lr_sessions.items():
        direct[(web, db)] += k
    for (client, dns, _web), k in rr_sessions.items():
        direct[(client, dns)] += k
        direct[(dns, client)] += k
    records = [DependencyRecord(DepKind.DD, src, dst, k)
               for (src, dst), k in direct.items()]

    chained: Counter = Counter()
    for (client, dns, web), k in rr_sessions.items():
        chained[(web, dns)] += k
    records += [DependencyRecord(DepKind.RR, web, dns, k)
                for (web, dns), k in chained.items()]

    transitive: Counter = Counter()
    for (client, web, db), k in lr_sessions.items():
        transitive[(client, db, web)] += k
    records += [DependencyRecord(DepKind.TD, client, db, k, via=(web,))
                for (client, db, web), k in transitive.items()]
    return sorted(records, key=record_key)
