"""Iterated donor-game simulation with generational selection.

Library layout mirrors the moving parts: `core` (game state machine),
`scheduling` (pairings), `agents` and `prompts` (decision layer), `dsl`
(scripted strategies), `gateway` (completion providers), `evolution`
(generational loop), `metrics` (analyses), `persistence` (artifacts),
`cli` (command line).
"""

from .core import (
    AgentId,
    DonationEvent,
    GameConfig,
    GameError,
    GameState,
    TraceEntry,
    apply_donation,
    apply_punishment,
    build_trace,
    init_game,
)
from .evolution import ExperimentConfig, ExperimentResult, run_experiment
from .scheduling import Schedule, make_schedule, swap_roles

__version__ = "0.1.0"

__all__ = [
    "AgentId",
    "DonationEvent",
    "ExperimentConfig",
    "ExperimentResult",
    "GameConfig",
    "GameError",
    "GameState",
    "Schedule",
    "TraceEntry",
    "apply_donation",
    "apply_punishment",
    "build_trace",
    "init_game",
    "make_schedule",
    "run_experiment",
    "swap_roles",
    "__version__",
]
