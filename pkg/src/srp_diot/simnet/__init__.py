"""Deterministic discrete-event simulation of discovery protocols."""

from .config import PROTOCOLS, RTB_SCALE, BaselineParams, SimConfig, format_config, load_config, parse_config
from .world import (
    CSV_COLUMNS,
    Driver,
    Message,
    QueryRecord,
    SimWorld,
    StatsAccumulator,
    StatsReport,
    build_world,
    csv_text,
    run,
    run_world,
    step,
)
