"""Deterministic discrete-event simulation of CCN routers.

Clock: integer milliseconds. Events at equal times are ordered by a fixed
kind priority, then by insertion sequence.
"""

from __future__ import annotations

import heapq
import logging
import random
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path

from . import agent
from .cache import ChunkId, ContentStore, PolicyKind
from .lars import parse_program
from .workload import ConfigError, ScenarioConfig, schedule, validate

log = logging.getLogger(__name__)

# event kinds, in tie-break priority order
PHASE_CHANGE = 0
ADMIN_SWITCH = 1
PROGRAM_SWAP = 2
PACKET_ARRIVAL = 3
CONSUMER_REQUEST = 4
REASONER_TICK = 5
STATS_TICK = 6

EVENT_KINDS = {
    "phase-change": PHASE_CHANGE,
    "admin-switch": ADMIN_SWITCH,
    "program-swap": PROGRAM_SWAP,
    "packet-arrival": PACKET_ARRIVAL,
    "consumer-request": CONSUMER_REQUEST,
    "reasoner-tick": REASONER_TICK,
    "stats-tick": STATS_TICK,
}


def node_key(node: str) -> tuple:
    """Natural ordering: n2 < n10."""
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.findall(r"\d+|\D+", node))


ABILENE_EDGES = (
    ("n0", "n10"), ("n0", "n1"), ("n1", "n10"), ("n1", "n2"), ("n2", "n3"),
    ("n2", "n8"), ("n3", "n4"), ("n3", "n7"), ("n4", "n5"), ("n5", "n6"),
    ("n6", "n7"), ("n7", "n8"), ("n8", "n9"), ("n9", "n10"),
)


@dataclass(frozen=True)
class Topology:
    nodes: tuple
    edges: frozenset
    link_delay: int = 10

    def __post_init__(self):
        for e in self.edges:
            if len(e) != 2:
                raise ConfigError("topology", f"self-loop on {sorted(e)[0]}")
            for n in e:
                if n not in self.nodes:
                    raise ConfigError("topology", f"edge uses undeclared node {n}")
        object.__setattr__(self, "nodes", tuple(sorted(set(self.nodes), key=node_key)))
        adj = {n: [] for n in self.nodes}
        for a, b in (sorted(e, key=node_key) for e in self.edges):
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adj", {n: tuple(sorted(v, key=node_key)) for n, v in adj.items()})

    def neighbors(self, node: str) -> tuple:
        return self._adj[node]

    @classmethod
    def from_edges(cls, edges, nodes=(), link_delay: int = 10) -> "Topology":
        seen = set()
        all_nodes = set(nodes)
        for a, b in edges:
            if a == b:
                raise ConfigError("topology", f"self-loop on {a}")
            key = frozenset((a, b))
            if key in seen:
                raise ConfigError("topology", f"duplicate edge {a} {b}")
            seen.add(key)
            all_nodes.update((a, b))
        return cls(tuple(all_nodes), frozenset(seen), link_delay)

    def distances(self, source: str) -> dict:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        return not self.nodes or len(self.distances(self.nodes[0])) == len(self.nodes)

    def diameter(self) -> int:
        return max(max(self.distances(n).values()) for n in self.nodes)


def abilene(link_delay: int = 10) -> Topology:
    return Topology.from_edges(ABILENE_EDGES, link_delay=link_delay)


def parse_topology(text: str, link_delay: int = 10) -> Topology:
    """Line format: ``node <id>`` and ``edge <a> <b>``; ``#`` starts a comment."""
    nodes, edges = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "node" and len(parts) == 2:
            nodes.append(parts[1])
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append((parts[1], parts[2]))
        else:
            raise ConfigError("topology", f"line {lineno}: expected 'node <id>' or 'edge <a> <b>'")
    topo = Topology.from_edges(edges, nodes, link_delay)
    if not topo.nodes:
        raise ConfigError("topology", "no nodes")
    return topo


def load_topology(spec: str, link_delay: int = 10) -> Topology:
    if spec == "abilene":
        return abilene(link_delay)
    path = Path(spec)
    if not path.is_file():
        raise ConfigError("topology", f"topology file not found: {path}")
    return parse_topology(path.read_text(encoding="utf-8"), link_delay)


def build_fib(topology: Topology, producer_node: str) -> dict:
    """Next hop toward ``producer_node`` per router (None at the producer).

    Among equally short paths the smallest next-hop id wins.
    """
    if producer_node not in topology.nodes:
        raise ConfigError("producer_node", f"unknown node {producer_node}")
    dist = topology.distances(producer_node)
    if len(dist) != len(topology.nodes):
        missing = sorted(set(topology.nodes) - set(dist), key=node_key)
        raise ConfigError("topology", f"disconnected: {', '.join(missing)} cannot reach {producer_node}")
    fib = {}
    for n in topology.nodes:
        if n == producer_node:
            fib[n] = None
        else:
            fib[n] = min((v for v in topology.neighbors(n) if dist[v] == dist[n] - 1), key=node_key)
    return fib


# -- routers and packets -------------------------------------------------------


@dataclass
class PitEntry:
    faces: list
    expiry: int


@dataclass(frozen=True)
class InterestPacket:
    chunk: ChunkId
    origin_consumer: int
    nonce: int


@dataclass(frozen=True)
class DataPacket:
    chunk: ChunkId
    hops_from_answer: int
    from_cache: bool


@dataclass
class RouterState:
    id: str
    store: ContentStore
    fib: str | None
    pit: dict = field(default_factory=dict)
    interest_log: deque = field(default_factory=deque)
    policy_log: list = field(default_factory=list)
    window_counts: Counter = field(default_factory=Counter)
    second_total: int = 0
    second_realtime: int = 0
    hits: int = 0
    forwarded: int = 0


def router_face(node: str) -> tuple:
    return ("r", node)


def consumer_face(consumer: int) -> tuple:
    return ("c", consumer)


# -- metrics -------------------------------------------------------------------


@dataclass
class MetricsReport:
    scenario: str
    digest: str
    strategy: str
    seed: int
    horizon: int
    phase_starts: tuple
    routers: tuple
    requests: list
    hits: list
    deliveries: list
    distance_sum: list
    active_downloads: list
    policies: dict
    policy_log: dict
    alpha_log: dict
    issued: int = 0
    satisfied: int = 0
    expired: int = 0
    stray: int = 0
    unsatisfiable: int = 0
    pit_expired: int = 0
    router_hits: dict = field(default_factory=dict)

    @property
    def total_requests(self) -> int:
        return sum(self.requests)

    @property
    def total_hits(self) -> int:
        return sum(self.hits)


def _span(report: MetricsReport, interval) -> range:
    lo, hi = interval if interval is not None else (0, report.horizon)
    return range(max(0, lo), min(report.horizon, hi))


def hit_ratio(report: MetricsReport, interval=None) -> tuple:
    """Fraction of requests answered from a cache, plus the per-second series.

    Seconds (and intervals) without requests count as 0.
    """
    secs = _span(report, interval)
    req = sum(report.requests[s] for s in secs)
    hits = sum(report.hits[s] for s in secs)
    series = [report.hits[s] / report.requests[s] if report.requests[s] else 0.0 for s in secs]
    return (hits / req if req else 0.0), series


def hit_distance(report: MetricsReport, interval=None) -> float | None:
    """Mean router hops from the answering node to the consumer's access router."""
    secs = _span(report, interval)
    n = sum(report.deliveries[s] for s in secs)
    if n == 0:
        return None
    return sum(report.distance_sum[s] for s in secs) / n


# -- simulation ----------------------------------------------------------------


class Simulation:
    def __init__(self, cfg: ScenarioConfig, topology: Topology | None = None):
        self.cfg = validate(cfg)
        self.topology = topology or load_topology(cfg.topology, cfg.link_delay_ms)
        self.fib = build_fib(self.topology, cfg.producer_node)
        self.delay = cfg.link_delay_ms
        self.catalog = cfg.catalog
        self.realtime = {self.catalog.video_name(r) for r in cfg.realtime_videos}
        self.horizon = cfg.horizon
        self.queue: list = []
        self._seq = 0
        self._nonce = 0
        self.now = 0
        names = self.topology.nodes
        self.routers = {}
        for i, n in enumerate(names):
            store = ContentStore(cfg.cache_size, self._policy_at_start(), rng_seed=f"{cfg.seed}:cache:{n}")
            self.routers[n] = RouterState(n, store, self.fib[n])
            self.routers[n].policy_log.append((0, store.policy))
        self.rng = random.Random(f"{cfg.seed}:workload")
        self.plans = schedule(cfg, list(names), self.rng)
        self.db = agent.EventDB(retention=max(35, cfg.estimation_window + 5))
        self.decision = None
        if cfg.strategy == "ica":
            program = parse_program(Path(cfg.program).read_text(encoding="utf-8")) if cfg.program else None
            self.decision = agent.DecisionConfig(
                program=program or agent.default_program(),
                reasoner_period=cfg.reasoner_period,
                estimation_window=cfg.estimation_window,
                min_interests=cfg.min_interests,
                initial_policy=PolicyKind(cfg.initial_policy),
            )
        H = self.horizon
        self.m_requests = [0] * H
        self.m_hits = [0] * H
        self.m_deliveries = [0] * H
        self.m_distance = [0] * H
        self.m_policies = {n: [""] * H for n in names}
        self.m_alpha = {n: [None] * H for n in names}
        self.pending: dict = {}
        self.issued = self.satisfied = self.expired = 0
        self.stray = self.unsatisfiable = self.pit_expired = 0

    def _policy_at_start(self) -> PolicyKind:
        s = self.cfg.strategy
        if s == "ica":
            return PolicyKind(self.cfg.initial_policy)
        if s == "admin":
            return self._admin_policy(self.cfg.phases[0][2])
        return PolicyKind(s)

    def _admin_policy(self, alpha: float) -> PolicyKind:
        return PolicyKind.LFU if alpha >= self.cfg.admin_high_alpha else PolicyKind.RANDOM

    def push(self, at: int, kind: int, payload) -> None:
        self._seq += 1
        heapq.heappush(self.queue, (at, kind, self._seq, payload))

    # -- setup
    def _seed_events(self) -> None:
        cfg = self.cfg
        for i, (start, _, alpha) in enumerate(cfg.phases):
            if i > 0:
                self.push(start * 1000, PHASE_CHANGE, (i, alpha))
                if cfg.strategy == "admin":
                    self.push(start * 1000, ADMIN_SWITCH, self._admin_policy(alpha))
        if cfg.strategy == "ica":
            for second, path in cfg.program_swaps:
                self.push(second * 1000, PROGRAM_SWAP, path)
            for s in range(cfg.reasoner_period, self.horizon, cfg.reasoner_period):
                self.push(s * 1000, REASONER_TICK, s)
        for s in range(self.horizon):
            self.push(s * 1000, STATS_TICK, s)
        for plan in self.plans:
            for d in plan.downloads:
                if d.chunk_times:
                    self.push(d.chunk_times[0], CONSUMER_REQUEST, (plan.consumer, d, 0))

    def run(self) -> MetricsReport:
        self._seed_events()
        handlers = {
            PHASE_CHANGE: self._on_phase_change,
            ADMIN_SWITCH: self._on_admin_switch,
            PROGRAM_SWAP: self._on_program_swap,
            PACKET_ARRIVAL: self._on_packet,
            CONSUMER_REQUEST: self._on_request,
            REASONER_TICK: self._on_reasoner_tick,
            STATS_TICK: self._on_stats_tick,
        }
        queue = self.queue
        while queue:
            at, kind, _, payload = heapq.heappop(queue)
            self.now = at
            handlers[kind](payload)
        return self._report()

    # -- handlers
    def _on_phase_change(self, payload) -> None:
        i, alpha = payload
        log.debug("t=%dms phase %d starts (alpha=%s)", self.now, i, alpha)

    def _on_admin_switch(self, policy: PolicyKind) -> None:
        for r in self.routers.values():
            agent.actuate(r, policy, self.now)

    def _on_program_swap(self, path: str) -> None:
        self.decision.program = parse_program(Path(path).read_text(encoding="utf-8"))

    def _on_reasoner_tick(self, second: int) -> None:
        # the snapshot for `second` is taken by the stats tick that follows;
        # reason over the last completed one
        for r in self.routers.values():
            agent.decide_and_actuate(self.db, r, second - 1, self.now, self.decision)

    def measure(self, r: RouterState, second: int) -> tuple:
        """(alpha10 or None, rtm50) for the window ending at ``second``."""
        cutoff = (second - self.cfg.estimation_window) * 1000
        log_ = r.interest_log
        while log_ and log_[0][0] <= cutoff:
            _, content = log_.popleft()
            r.window_counts[content] -= 1
            if not r.window_counts[content]:
                del r.window_counts[content]
        alpha10 = agent.estimate_alpha(r.window_counts, self.cfg.min_interests)
        rtm50 = r.second_total > 0 and 2 * r.second_realtime >= r.second_total
        r.second_total = r.second_realtime = 0
        return alpha10, rtm50

    def _on_stats_tick(self, second: int) -> None:
        for name, r in self.routers.items():
            alpha10, rtm50 = self.measure(r, second)
            self.db.record_tick(name, second, alpha10, rtm50)
            self.m_alpha[name][second] = alpha10
            self.m_policies[name][second] = r.store.policy.value
            for chunk in [c for c, e in r.pit.items() if e.expiry < self.now]:
                del r.pit[chunk]
                self.pit_expired += 1

    def _on_request(self, payload) -> None:
        consumer, download, i = payload
        chunk = ChunkId(download.video, i)
        now = self.now
        self.issued += 1
        sec = now // 1000
        self.m_requests[sec] += 1
        self.pending.setdefault((consumer, chunk), []).append(now)
        self._nonce += 1
        pkt = InterestPacket(chunk, consumer, self._nonce)
        self.push(now + self.delay, PACKET_ARRIVAL, ("interest", download.router, pkt, consumer_face(consumer)))
        if i + 1 < len(download.chunk_times):
            self.push(download.chunk_times[i + 1], CONSUMER_REQUEST, (consumer, download, i + 1))

    def _on_packet(self, payload) -> None:
        kind = payload[0]
        if kind == "interest":
            self.process_interest(self.routers[payload[1]], payload[2], payload[3])
        elif kind == "data":
            self.process_data(self.routers[payload[1]], payload[2])
        else:
            self._deliver(payload[1], payload[2])

    def _send_data(self, router: RouterState, face: tuple, pkt: DataPacket) -> None:
        if face[0] == "r":
            fwd = DataPacket(pkt.chunk, pkt.hops_from_answer + 1, pkt.from_cache)
            self.push(self.now + self.delay, PACKET_ARRIVAL, ("data", face[1], fwd))
        else:
            self.push(self.now + self.delay, PACKET_ARRIVAL, ("deliver", face[1], pkt))

    def process_interest(self, router: RouterState, pkt: InterestPacket, in_face: tuple) -> None:
        now = self.now
        chunk = pkt.chunk
        router.interest_log.append((now, chunk.content))
        router.window_counts[chunk.content] += 1
        router.second_total += 1
        if chunk.content in self.realtime:
            router.second_realtime += 1
        if router.store.lookup(chunk, now):
            router.hits += 1
            self._send_data(router, in_face, DataPacket(chunk, 0, True))
            return
        entry = router.pit.get(chunk)
        if entry is not None and entry.expiry < now:
            del router.pit[chunk]
            self.pit_expired += 1
            entry = None
        if entry is not None:
            if in_face not in entry.faces:
                entry.faces.append(in_face)
            return
        router.pit[chunk] = PitEntry([in_face], now + self.cfg.pit_lifetime_ms)
        if router.fib is None:
            # the producer is attached to this router
            self.process_data(router, DataPacket(chunk, 0, False))
            return
        router.forwarded += 1
        self.push(now + self.delay, PACKET_ARRIVAL, ("interest", router.fib, pkt, router_face(router.id)))

    def process_data(self, router: RouterState, pkt: DataPacket) -> None:
        entry = router.pit.pop(pkt.chunk, None)
        if entry is None or entry.expiry < self.now:
            if entry is not None:
                self.pit_expired += 1
            self.stray += 1
            return
        if pkt.chunk not in router.store:
            router.store.insert(pkt.chunk, self.now)
        for face in entry.faces:
            self._send_data(router, face, pkt)

    def _deliver(self, consumer: int, pkt: DataPacket) -> None:
        issued = self.pending.pop((consumer, pkt.chunk), None)
        if issued is None:
            self.stray += 1
            return
        lifetime = self.cfg.pit_lifetime_ms
        for t0 in issued:
            if self.now > t0 + lifetime:
                self.expired += 1
                continue
            sec = t0 // 1000
            self.satisfied += 1
            self.m_deliveries[sec] += 1
            self.m_distance[sec] += pkt.hops_from_answer
            if pkt.from_cache:
                self.m_hits[sec] += 1

    def _report(self) -> MetricsReport:
        self.expired += sum(len(v) for v in self.pending.values())
        self.pending.clear()
        H = self.horizon
        active = [0] * H
        for plan in self.plans:
            for d in plan.downloads:
                if not d.chunk_times:
                    continue
                for s in range(d.start_ms // 1000, min(H, d.end_ms // 1000 + 1)):
                    active[s] += 1
        cfg = self.cfg
        return MetricsReport(
            scenario=cfg.name,
            digest=cfg.digest(),
            strategy=cfg.strategy,
            seed=cfg.seed,
            horizon=H,
            phase_starts=tuple(p[0] for p in cfg.phases),
            routers=tuple(self.routers),
            requests=self.m_requests,
            hits=self.m_hits,
            deliveries=self.m_deliveries,
            distance_sum=self.m_distance,
            active_downloads=active,
            policies=self.m_policies,
            policy_log={n: list(r.policy_log) for n, r in self.routers.items()},
            alpha_log=self.m_alpha,
            issued=self.issued,
            satisfied=self.satisfied,
            expired=self.expired,
            stray=self.stray,
            unsatisfiable=self.unsatisfiable,
            pit_expired=self.pit_expired,
            router_hits={n: r.hits for n, r in self.routers.items()},
        )


def run(cfg: ScenarioConfig, topology: Topology | None = None) -> MetricsReport:
    return Simulation(cfg, topology).run()
