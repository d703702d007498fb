"""Comparison protocols driven by the same simulated world as the routing protocol."""

from .centralized import CentralizedDriver
from .chord import ChordDriver, Ring
from .flooding import Flood, FloodingDriver, calibrate_hop_limit, choose_hop_limit
from .gsd import GsdCache, GsdDriver

__all__ = [
    "CentralizedDriver",
    "ChordDriver",
    "Flood",
    "FloodingDriver",
    "GsdCache",
    "GsdDriver",
    "Ring",
    "calibrate_hop_limit",
    "choose_hop_limit",
]
