"""Per-router decision unit: event database, alpha estimation, policy choice."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from importlib.resources import files
from typing import Mapping

from .cache import PolicyKind
from .lars import LarsError, Program, Stream, Timeline, answer_stream_stratified, atom, parse_program

log = logging.getLogger(__name__)

ALPHA_MAX = 5.0


def default_program_text() -> str:
    return files("icasim.programs").joinpath("ica_default.rules").read_text(encoding="utf-8")


_DEFAULT_PROGRAM: Program | None = None


def default_program() -> Program:
    global _DEFAULT_PROGRAM
    if _DEFAULT_PROGRAM is None:
        _DEFAULT_PROGRAM = parse_program(default_program_text())
    return _DEFAULT_PROGRAM


@dataclass
class DecisionConfig:
    program: Program = field(default_factory=default_program)
    reasoner_period: int = 10
    estimation_window: int = 30
    min_interests: int = 50
    initial_policy: PolicyKind = PolicyKind.LFU

    def __post_init__(self):
        if self.reasoner_period < 1:
            raise ValueError("reasoner_period must be >= 1")
        if self.estimation_window < 1:
            raise ValueError("estimation_window must be >= 1")
        self.initial_policy = PolicyKind(self.initial_policy)

    @property
    def stream_span(self) -> int:
        return self.program.max_window()


def estimate_alpha(counts: Mapping, min_interests: int = 50) -> int | None:
    """Zipf exponent estimate from per-content Interest counts, scaled by 10.

    Fits log(count) against log(rank) by least squares weighted with the
    counts, so that sparsely observed tail contents do not dominate. Returns
    None when fewer than ``min_interests`` Interests or fewer than two
    distinct contents were seen.
    """
    observed = sorted((c for c in counts.values() if c >= 1), reverse=True)
    if sum(observed) < min_interests or len(observed) < 2:
        return None
    xs = [math.log(r) for r in range(1, len(observed) + 1)]
    ys = [math.log(c) for c in observed]
    total = float(sum(observed))
    xm = sum(w * x for w, x in zip(observed, xs)) / total
    ym = sum(w * y for w, y in zip(observed, ys)) / total
    sxx = sum(w * (x - xm) ** 2 for w, x in zip(observed, xs))
    sxy = sum(w * (x - xm) * (y - ym) for w, x, y in zip(observed, xs, ys))
    alpha = -sxy / sxx if sxx > 0 else 0.0
    alpha = min(max(alpha, 0.0), ALPHA_MAX)
    return int(math.floor(alpha * 10 + 0.5))


@dataclass(frozen=True)
class TickRecord:
    second: int
    alpha10: int | None
    rtm50: bool


class OrderingError(ValueError):
    pass


class EventDB:
    """Per-router rings of per-second snapshots."""

    def __init__(self, retention: int = 35):
        self.retention = retention
        self._rings: dict = {}

    def records(self, router) -> deque:
        return self._rings.get(router, deque())

    def routers(self):
        return list(self._rings)

    def record_tick(self, router, second: int, alpha10: int | None, rtm50: bool) -> None:
        ring = self._rings.setdefault(router, deque())
        if ring and second < ring[-1].second:
            raise OrderingError(f"router {router}: second {second} recorded after {ring[-1].second}")
        rec = TickRecord(second, alpha10, bool(rtm50))
        if ring and ring[-1].second == second:
            ring[-1] = rec
        else:
            ring.append(rec)
        while ring and ring[0].second <= second - self.retention:
            ring.popleft()


def build_stream(db: EventDB, router, now: int, span: int = 30) -> Stream:
    """Data stream over [now - span, now] (clamped at 0) from the router's records."""
    tl = Timeline(max(0, now - span), now)
    ev: dict = {}
    for rec in db.records(router):
        if rec.second not in tl:
            continue
        atoms = set()
        if rec.alpha10 is not None:
            atoms.add(atom("alpha", rec.alpha10))
        if rec.rtm50:
            atoms.add(atom("rtm50"))
        if atoms:
            ev[rec.second] = atoms
    return Stream(tl, ev)


_PRIORITY = (PolicyKind.LFU, PolicyKind.LRU, PolicyKind.FIFO, PolicyKind.RANDOM)


def decide(db: EventDB, router, now: int, cfg: DecisionConfig) -> PolicyKind:
    """Run the decision program on the router's recent data stream."""
    stream = build_stream(db, router, now, cfg.stream_span)
    answer = answer_stream_stratified(cfg.program, stream, now)
    chosen = {str(a.args[0]) for a in answer.at(now) if a.predicate == "use" and len(a.args) == 1}
    if cfg.program is default_program():
        assert len(chosen) == 1, f"default program selected {sorted(chosen)} at {now}"
    for policy in _PRIORITY:
        if policy.value in chosen:
            return policy
    return PolicyKind.RANDOM


def actuate(router, decision: PolicyKind, now_ms: int) -> bool:
    """Apply ``decision`` to the router's store; log only actual changes."""
    if decision == router.store.policy:
        return False
    router.store.switch_policy(decision, now_ms)
    router.policy_log.append((now_ms, decision))
    return True


def decide_and_actuate(db: EventDB, router, now: int, now_ms: int, cfg: DecisionConfig) -> PolicyKind:
    try:
        decision = decide(db, router.id, now, cfg)
    except LarsError as exc:
        log.warning("router %s keeps %s: decision program failed: %s", router.id, router.store.policy, exc)
        return router.store.policy
    actuate(router, decision, now_ms)
    return decision
