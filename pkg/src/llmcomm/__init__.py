"""Presence-routed, LLM-mediated messaging: protocol library and simulator."""

from .protocol import (
    DISCLOSURE_LINE,
    Message,
    PresenceStatus,
    RoutingAction,
    Status,
    apply_disclosure,
    decide_route,
)
from .scenario import load_packaged, load_scenario
from .simulation import run_with_baseline, simulate

__version__ = "0.1.0"
