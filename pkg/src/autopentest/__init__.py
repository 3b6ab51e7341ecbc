"""Autonomous black-box penetration-testing agent.

A plan/route/execute multi-agent loop over a configurable chat-completion
provider, with automated service discovery, per-worker retrieval-augmented
context, a guarded tool belt, human-in-the-loop command approval, and a
benchmark harness with scoring and cost accounting.
"""

__version__ = "0.1.0"

from .domain import (
    Observation,
    Plan,
    RunConfig,
    RunPhase,
    RunState,
    Target,
    TokenUsage,
    WorkerName,
    validate_target,
)
from .gateway import cost_of, estimate_query_capacity
from .graph import AgentGraph, RunReport

__all__ = [
    "AgentGraph",
    "Observation",
    "Plan",
    "RunConfig",
    "RunPhase",
    "RunReport",
    "RunState",
    "Target",
    "TokenUsage",
    "WorkerName",
    "cost_of",
    "estimate_query_capacity",
    "validate_target",
    "__version__",
]
