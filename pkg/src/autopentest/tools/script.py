"""Script runtime: write agent-generated source to a temp file and execute it
with the configured interpreter."""

from __future__ import annotations

import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .base import ToolResult
from .shells import ProcessRunner

DEFAULT_SCRIPT_TIMEOUT = 600.0


@dataclass
class ScriptRuntime:
    runner: ProcessRunner
    interpreter: tuple[str, ...] = field(default_factory=lambda: (sys.executable,))
    timeout: float = DEFAULT_SCRIPT_TIMEOUT

    def run(self, source: str) -> ToolResult:
        started = time.monotonic()
        with tempfile.NamedTemporaryFile(
            "w", suffix=".py", prefix="autopentest_", delete=False
        ) as handle:
            handle.write(source)
            path = Path(handle.name)
        try:
            output, status = self.runner.run(
                [*self.interpreter, str(path)], timeout=self.timeout
            )
        except subprocess.TimeoutExpired:
            return ToolResult.from_output(
                f"error: script timed out after {self.timeout:g} seconds",
                duration=time.monotonic() - started,
            )
        except (OSError, FileNotFoundError) as exc:
            return ToolResult.from_output(
                f"error: failed to start interpreter: {exc}",
                duration=time.monotonic() - started,
            )
        finally:
            path.unlink(missing_ok=True)
        if status != 0:
            output = f"{output}\nscript exited with status {status}".lstrip("\n")
        return ToolResult.from_output(
            output, exit_status=status, duration=time.monotonic() - started
        )
