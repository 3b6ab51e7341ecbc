"""Executable capabilities available to the specialised workers."""

from .base import (
    ToolParameter,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    registry_for,
    truncate_output,
)

__all__ = [
    "ToolParameter",
    "ToolRegistry",
    "ToolResult",
    "ToolSpec",
    "registry_for",
    "truncate_output",
]
