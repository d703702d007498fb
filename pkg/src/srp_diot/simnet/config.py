"""Experiment configuration and its INI representation."""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..metrics import UtilityParams

PROTOCOLS = ("srp", "dsdv", "flooding", "gsd", "centralized", "chord")

# the experiment table quotes table bounds in megabytes; at desk scale a full
# table is a few kilobytes, so each megabyte is simulated as one kilobyte
RTB_SCALE = 1 / 1024


@dataclass(frozen=True)
class BaselineParams:
    # 0 picks the smallest limit that reaches the calibration target
    flood_hop_limit: int = 0
    flood_target_success: float = 0.99
    gsd_cache_hops: int = 5
    gsd_group_depth: int = 2
    chord_ring_bits: int = 16
    chord_stabilize_interval: int = 30


@dataclass(frozen=True)
class SimConfig:
    nodes: int = 200
    ontology_leaves: int = 268
    ontology_seed: int = 7
    ontology_file: str | None = None
    comm_range: float = 100.0
    # square side in metres; None sizes it for the target degree
    area: float | None = None
    target_degree: float = 8.0
    mobility_mix: tuple[int, int, int] = (100, 0, 0)
    speed_caps: tuple[float, float] = (25.0, 50.0)
    holder_fraction: float = 0.6
    zipf_skew: float = 0.75
    q_interval: int = 30
    a_interval: int = 120
    query_batch: int = 10
    usage_period: int = 30
    # synchronous advertisement rounds before the clock starts; -1 means twice the
    # initial diameter for a static network and none for a mobile one
    bootstrap_rounds: int = -1
    warmup: int = 0
    duration: int = 300
    drain: int = 200
    seed: int = 1
    protocol: str = "srp"
    rtb_bytes: int = 1024
    ttl: int = 64
    rf_budget: int = 10
    # advertised routes this many hops long are unreachable; 0 disables the ceiling
    max_hop: int = 16
    # seconds a route's smallest hop count is remembered after the route is lost; 0 disables
    holddown: int = 120
    trace_file: str | None = None
    utility: UtilityParams = field(default_factory=UtilityParams)
    baseline: BaselineParams = field(default_factory=BaselineParams)

    def __post_init__(self):
        if self.nodes < 1:
            raise ConfigError("nodes must be >= 1")
        if len(self.mobility_mix) != 3 or sum(self.mobility_mix) != 100 or min(self.mobility_mix) < 0:
            raise ConfigError(f"mobility mix {self.mobility_mix} must be three shares summing to 100")
        if not 0 < self.holder_fraction <= 1:
            raise ConfigError("holder_fraction must lie in (0, 1]")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        for name in ("q_interval", "a_interval", "usage_period"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.bootstrap_rounds < -1:
            raise ConfigError("bootstrap_rounds must be >= -1")
        for name in ("duration", "warmup", "drain", "query_batch", "max_hop", "holddown"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.rtb_bytes < 1 or self.comm_range <= 0:
            raise ConfigError("rtb_bytes and comm_range must be positive")

    @property
    def side(self) -> float:
        if self.area is not None:
            return float(self.area)
        return math.sqrt(math.pi * self.comm_range**2 * self.nodes / self.target_degree)

    @property
    def expected_degree(self) -> float:
        return math.pi * self.comm_range**2 * (self.nodes - 1) / self.side**2

    @property
    def mobile(self) -> bool:
        return self.trace_file is not None or self.mobility_mix[0] < 100


_PROTOCOL_KEYS = {"protocol", "ttl", "rf_budget", "usage_period", "max_hop", "holddown"}
_SIM_KEYS = {f.name for f in fields(SimConfig)} - _PROTOCOL_KEYS - {"utility", "baseline"} | {"protocol"}


def _coerce(raw: str, current, name: str):
    try:
        if isinstance(current, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, tuple):
            kind = type(current[0])
            return tuple(kind(p) for p in raw.replace(",", " ").split())
        if isinstance(current, (int, float)):
            return type(current)(raw)
        low = raw.strip()
        if current is None and low.lower() in ("", "none"):
            return None
        if name == "area":
            return float(low)
        return low
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def _apply(obj, section: str, items: dict[str, str], allowed: set[str]):
    changes = {}
    for key, raw in items.items():
        if key not in allowed:
            raise ConfigError(f"unknown key [{section}] {key}")
        changes[key] = _coerce(raw, getattr(obj, key), key)
    try:
        return replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str) -> SimConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(cp.sections()) - {"sim", "utility", "protocol", "baseline"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    cfg = SimConfig()
    if cp.has_section("sim"):
        cfg = _apply(cfg, "sim", dict(cp["sim"]), _SIM_KEYS)
    if cp.has_section("protocol"):
        items = dict(cp["protocol"])
        if "name" in items:
            items["protocol"] = items.pop("name")
        cfg = _apply(cfg, "protocol", items, _PROTOCOL_KEYS)
    if cp.has_section("utility"):
        u = _apply(cfg.utility, "utility", dict(cp["utility"]), {f.name for f in fields(UtilityParams)})
        cfg = replace(cfg, utility=u)
    if cp.has_section("baseline"):
        b = _apply(cfg.baseline, "baseline", dict(cp["baseline"]), {f.name for f in fields(BaselineParams)})
        cfg = replace(cfg, baseline=b)
    return cfg


def load_config(path: str | Path) -> SimConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def format_config(cfg: SimConfig) -> str:
    """Render ``cfg`` as INI text that :func:`parse_config` reads back unchanged."""

    def fmt(v) -> str:
        if isinstance(v, tuple):
            return ", ".join(fmt(x) for x in v)
        if v is None:
            return "none"
        return str(v).lower() if isinstance(v, bool) else str(v)

    out = ["[sim]"]
    for k, v in asdict(cfg).items():
        if k not in _SIM_KEYS or k == "protocol":
            continue
        out.append(f"{k} = {fmt(v)}")
    out += ["", "[protocol]", f"name = {cfg.protocol}", f"ttl = {cfg.ttl}", f"rf_budget = {cfg.rf_budget}",
            f"usage_period = {cfg.usage_period}", f"max_hop = {cfg.max_hop}",
            f"holddown = {cfg.holddown}", "", "[utility]"]
    out += [f"{k} = {fmt(v)}" for k, v in asdict(cfg.utility).items()]
    out += ["", "[baseline]"]
    out += [f"{k} = {fmt(v)}" for k, v in asdict(cfg.baseline).items()]
    return "\n".join(out) + "\n"
