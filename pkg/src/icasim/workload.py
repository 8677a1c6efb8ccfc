"""Zipf video popularity, scenario configuration and download schedules."""

from __future__ import annotations

import bisect
import functools
import hashlib
import itertools
import json
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

STRATEGIES = ("random", "lfu", "lru", "fifo", "admin", "ica")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# -- Zipf -------------------------------------------------------------------


def zipf_pmf(alpha: float, c: int, i: int) -> float:
    """Probability of rank ``i`` among ``c`` items with exponent ``alpha``."""
    if c < 1:
        raise ValueError(f"catalog size must be >= 1, got {c}")
    if not 1 <= i <= c:
        raise ValueError(f"rank {i} outside 1..{c}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return i ** -alpha / _harmonic(alpha, c)


@functools.lru_cache(maxsize=256)
def _harmonic(alpha: float, c: int) -> float:
    return math.fsum(j ** -alpha for j in range(1, c + 1))


@functools.lru_cache(maxsize=256)
def zipf_cdf(alpha: float, c: int) -> tuple:
    weights = [j ** -alpha for j in range(1, c + 1)]
    total = math.fsum(weights)
    cdf = list(itertools.accumulate(w / total for w in weights))
    cdf[-1] = 1.0
    return tuple(cdf)


def zipf_sample(rng: random.Random, alpha: float, c: int) -> int:
    """Draw a rank in 1..c by inverse-CDF lookup."""
    if c < 1 or alpha < 0:
        raise ValueError(f"invalid Zipf parameters alpha={alpha}, c={c}")
    return bisect.bisect_right(zipf_cdf(alpha, c), rng.random()) + 1


# -- scenario ---------------------------------------------------------------


@dataclass(frozen=True)
class Catalog:
    videos: int = 50
    chunks_per_video: int = 1000
    chunk_size: int = 10_000  # bytes
    bit_rate: float = 1.33e6  # bits per second

    @property
    def chunks_per_second(self) -> float:
        return self.bit_rate / (8 * self.chunk_size)

    @property
    def total_chunks(self) -> int:
        return self.videos * self.chunks_per_video

    def video_name(self, rank: int) -> str:
        width = len(str(self.videos - 1))
        return f"v{rank - 1:0{width}d}"


@dataclass(frozen=True)
class PopularityPhase:
    start: int  # seconds
    end: int
    alpha: float


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    topology: str = "abilene"
    strategy: str = "random"
    phases: tuple = ((0, 600, 0.4), (600, 1200, 2.5), (1200, 1800, 0.4))
    consumers: int = 1000
    videos: int = 50
    chunks_per_video: int = 1000
    chunk_size_kb: float = 10.0
    bit_rate: float = 1.33e6
    cache_chunks: int | None = None
    cache_percent: float | None = 1.0
    seed: int = 1
    producer_node: str = "n0"
    realtime_videos: tuple = ()
    link_delay_ms: int = 10
    pit_lifetime_ms: int = 4000
    reasoner_period: int = 10
    estimation_window: int = 30
    min_interests: int = 50
    initial_policy: str = "lfu"
    admin_high_alpha: float = 1.8
    program: str | None = None
    program_swaps: tuple = ()  # ((second, path), ...)

    @property
    def catalog(self) -> Catalog:
        return Catalog(self.videos, self.chunks_per_video, int(round(self.chunk_size_kb * 1000)), self.bit_rate)

    @property
    def popularity_phases(self) -> tuple:
        return tuple(PopularityPhase(int(s), int(e), float(a)) for s, e, a in self.phases)

    @property
    def horizon(self) -> int:
        return int(self.phases[-1][1]) if self.phases else 0

    @property
    def cache_size(self) -> int:
        if self.cache_chunks is not None:
            return int(self.cache_chunks)
        return max(1, int(round(self.cache_percent / 100.0 * self.videos * self.chunks_per_video)))

    def with_overrides(self, **kw) -> "ScenarioConfig":
        if "cache_chunks" in kw and kw["cache_chunks"] is not None and "cache_percent" not in kw:
            kw["cache_percent"] = None
        if "cache_percent" in kw and kw["cache_percent"] is not None and "cache_chunks" not in kw:
            kw["cache_chunks"] = None
        return replace(self, **_coerce(kw))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phases"] = [list(p) for p in self.phases]
        d["realtime_videos"] = list(self.realtime_videos)
        d["program_swaps"] = [list(p) for p in self.program_swaps]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELD_NAMES = {f.name for f in fields(ScenarioConfig)}


def _coerce(kw: dict) -> dict:
    out = {}
    for k, v in kw.items():
        if k not in _FIELD_NAMES:
            raise ConfigError(k, "unknown key")
        if k == "phases":
            v = tuple(tuple(p) for p in v)
        elif k in ("realtime_videos",):
            v = tuple(v)
        elif k == "program_swaps":
            v = tuple((int(s), str(path)) for s, path in v)
        out[k] = v
    return out


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Raise :class:`ConfigError` for the first invalid field."""

    def need(cond, name, msg):
        if not cond:
            raise ConfigError(name, msg)

    need(cfg.strategy in STRATEGIES, "strategy", f"must be one of {', '.join(STRATEGIES)}")
    need(isinstance(cfg.consumers, int) and cfg.consumers >= 0, "consumers", "must be a non-negative integer")
    need(isinstance(cfg.videos, int) and cfg.videos >= 1, "videos", "must be a positive integer")
    need(isinstance(cfg.chunks_per_video, int) and cfg.chunks_per_video >= 1, "chunks_per_video",
         "must be a positive integer")
    need(cfg.chunk_size_kb > 0, "chunk_size_kb", "must be positive")
    need(cfg.bit_rate > 0, "bit_rate", "must be positive")
    need(cfg.cache_chunks is not None or cfg.cache_percent is not None, "cache_chunks",
         "either cache_chunks or cache_percent is required")
    if cfg.cache_chunks is not None:
        need(isinstance(cfg.cache_chunks, int) and cfg.cache_chunks >= 1, "cache_chunks",
             "must be a positive integer")
    else:
        need(cfg.cache_percent > 0, "cache_percent", "must be positive")
    need(len(cfg.phases) >= 1, "phases", "at least one phase is required")
    prev_end = 0
    for i, ph in enumerate(cfg.phases):
        need(len(ph) == 3, "phases", f"phase {i} must be (start, end, alpha)")
        s, e, a = ph
        need(isinstance(s, int) and isinstance(e, int), "phases", f"phase {i} bounds must be integer seconds")
        need(s == prev_end, "phases", f"phase {i} must start at {prev_end} (phases partition [0, horizon))")
        need(e > s, "phases", f"phase {i} is empty")
        need(a >= 0, "phases", f"phase {i} alpha must be >= 0")
        prev_end = e
    need(cfg.link_delay_ms >= 0, "link_delay_ms", "must be >= 0")
    need(cfg.pit_lifetime_ms > 0, "pit_lifetime_ms", "must be positive")
    need(cfg.reasoner_period >= 1, "reasoner_period", "must be >= 1")
    need(cfg.estimation_window >= 1, "estimation_window", "must be >= 1")
    need(cfg.min_interests >= 0, "min_interests", "must be >= 0")
    need(cfg.initial_policy in ("lru", "fifo", "lfu", "random"), "initial_policy", "unknown policy")
    for r in cfg.realtime_videos:
        need(isinstance(r, int) and 1 <= r <= cfg.videos, "realtime_videos", f"rank {r} outside 1..{cfg.videos}")
    for s, _ in cfg.program_swaps:
        need(0 <= s <= cfg.horizon, "program_swaps", f"swap time {s} outside the run")
    return cfg


def _desk(name: str, alphas: tuple, phase: int = 200) -> ScenarioConfig:
    return ScenarioConfig(
        name=name,
        phases=tuple((i * phase, (i + 1) * phase, a) for i, a in enumerate(alphas)),
        consumers=600,  # enough concurrent downloads per router for a stable estimate
        videos=20,
        chunks_per_video=100,
        cache_percent=1.0,
    )


def _full(name: str, alphas: tuple) -> ScenarioConfig:
    return ScenarioConfig(
        name=name,
        phases=tuple((i * 600, (i + 1) * 600, a) for i, a in enumerate(alphas)),
    )


LOW, HIGH = 0.4, 2.5

BUILTIN_SCENARIOS = {
    "lhl-desk": _desk("lhl-desk", (LOW, HIGH, LOW)),
    "hlh-desk": _desk("hlh-desk", (HIGH, LOW, HIGH)),
    "lhl-full": _full("lhl-full", (LOW, HIGH, LOW)),
    "hlh-full": _full("hlh-full", (HIGH, LOW, HIGH)),
}
BUILTIN_SCENARIOS["lhl"] = BUILTIN_SCENARIOS["lhl-desk"]
BUILTIN_SCENARIOS["hlh"] = BUILTIN_SCENARIOS["hlh-desk"]


def load_scenario(name_or_path: str, **overrides) -> ScenarioConfig:
    """Built-in scenario by name, or a TOML scenario file.

    A file may name a built-in as ``base = "lhl-desk"`` and override any key.
    """
    if name_or_path in BUILTIN_SCENARIOS:
        cfg = BUILTIN_SCENARIOS[name_or_path]
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise ConfigError("scenario", f"no built-in scenario or file named {name_or_path!r}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("scenario", f"{path}: {exc}") from None
        base = data.pop("base", None)
        cfg = BUILTIN_SCENARIOS[base] if base else ScenarioConfig(name=path.stem)
        if base and base not in BUILTIN_SCENARIOS:
            raise ConfigError("base", f"unknown built-in scenario {base!r}")
        data.setdefault("name", path.stem)
        for key in ("topology", "program"):
            if key in data and data[key] != "abilene" and not Path(data[key]).is_absolute():
                data[key] = str(path.parent / data[key])
        if "program_swaps" in data:
            data["program_swaps"] = [
                (s, p if Path(p).is_absolute() else str(path.parent / p)) for s, p in data["program_swaps"]
            ]
        cfg = cfg.with_overrides(**data)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    return validate(cfg)


# -- schedule ---------------------------------------------------------------


@dataclass(frozen=True)
class Download:
    consumer: int
    router: str
    video: str
    rank: int
    start_ms: int
    chunk_times: tuple  # ms at which chunk i is requested

    @property
    def end_ms(self) -> int:
        return self.chunk_times[-1] if self.chunk_times else self.start_ms


@dataclass(frozen=True)
class ConsumerPlan:
    consumer: int
    router: str
    downloads: tuple = field(default_factory=tuple)


def chunk_request_times(start_ms: int, n_chunks: int, chunks_per_second: float, horizon_ms: int) -> tuple:
    step = 1000.0 / chunks_per_second
    times = (start_ms + int(math.floor(i * step + 0.5)) for i in range(n_chunks))
    return tuple(itertools.takewhile(lambda ms: ms < horizon_ms, times))


def place_consumers(cfg: ScenarioConfig, routers: list, rng: random.Random) -> list:
    return [rng.choice(routers) for _ in range(cfg.consumers)]


def schedule(cfg: ScenarioConfig, routers: list, rng: random.Random) -> list:
    """Consumer plans: one download per consumer per phase.

    Downloads started late in a phase run on past the phase boundary; only
    chunks past the simulation horizon are dropped.
    """
    cat = cfg.catalog
    placement = place_consumers(cfg, routers, rng)
    horizon_ms = cfg.horizon * 1000
    plans = []
    for cid, router in enumerate(placement):
        downloads = []
        for ph in cfg.popularity_phases:
            rank = zipf_sample(rng, ph.alpha, cat.videos)
            start_ms = rng.randrange(ph.start * 1000, ph.end * 1000)
            times = chunk_request_times(start_ms, cat.chunks_per_video, cat.chunks_per_second, horizon_ms)
            downloads.append(Download(cid, router, cat.video_name(rank), rank, start_ms, times))
        plans.append(ConsumerPlan(cid, router, tuple(downloads)))
    return plans


def iter_requests(plans: list) -> Iterator[tuple]:
    """All (ms, consumer, chunk index, download) requests in time order."""
    reqs = [
        (ms, p.consumer, i, d)
        for p in plans
        for d in p.downloads
        for i, ms in enumerate(d.chunk_times)
    ]
    reqs.sort(key=lambda r: (r[0], r[1], r[3].start_ms, r[2]))
    return iter(reqs)
