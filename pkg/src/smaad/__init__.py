"""Supervised multi-agent decision support over declarative domain packs."""

from .memory import FindingValue, StageKind, WorkingMemory
from .supervisor import Supervisor, SupervisorConfig, run_scenario, session_replay

__version__ = "0.1.0"

__all__ = [
    "FindingValue",
    "StageKind",
    "Supervisor",
    "SupervisorConfig",
    "WorkingMemory",
    "run_scenario",
    "session_replay",
    "__version__",
]
