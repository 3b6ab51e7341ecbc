"""Local shell execution: clean per-command sub-processes and one long-lived
shell session per run.

All spawning goes through a ProcessRunner so tests can count or fake process
launches. Failures are rendered into the result text so the calling agent can
read what went wrong and recover.
"""

from __future__ import annotations

import queue
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass

from .base import ToolResult

DEFAULT_SHELL = "/bin/bash"
DEFAULT_COMMAND_TIMEOUT = 300.0


class ProcessRunner:
    """Thin spawn layer; replace in tests to observe or suppress launches."""

    def run(
        self, argv: list[str], *, timeout: float, input_text: str | None = None
    ) -> tuple[str, int]:
        completed = subprocess.run(
            argv,
            input=input_text,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            timeout=timeout,
        )
        return completed.stdout or "", completed.returncode

    def popen(self, argv: list[str]) -> subprocess.Popen:
        return subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            bufsize=1,
        )


@dataclass
class TempShell:
    """Runs each command in a fresh shell sub-process; nothing persists."""

    runner: ProcessRunner
    shell_path: str = DEFAULT_SHELL
    timeout: float = DEFAULT_COMMAND_TIMEOUT

    def run(self, command: str) -> ToolResult:
        started = time.monotonic()
        try:
            output, status = self.runner.run(
                [self.shell_path, "-c", command], timeout=self.timeout
            )
        except subprocess.TimeoutExpired:
            return ToolResult.from_output(
                f"error: command timed out after {self.timeout:g} seconds",
                duration=time.monotonic() - started,
            )
        except (OSError, FileNotFoundError) as exc:
            return ToolResult.from_output(
                f"error: failed to spawn shell: {exc}",
                duration=time.monotonic() - started,
            )
        return ToolResult.from_output(
            output, exit_status=status, duration=time.monotonic() - started
        )


class PersistentShell:
    """One long-lived shell per run. Commands share working directory and
    environment; output boundaries are detected with a fresh random sentinel
    per call so command output can never be mistaken for the terminator."""

    def __init__(
        self,
        runner: ProcessRunner | None = None,
        shell_path: str = DEFAULT_SHELL,
        timeout: float = DEFAULT_COMMAND_TIMEOUT,
    ) -> None:
        self.runner = runner if runner is not None else ProcessRunner()
        self.shell_path = shell_path
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._lock = threading.Lock()

    def _start(self) -> None:
        self._proc = self.runner.popen([self.shell_path])
        self._lines = queue.Queue()
        reader = threading.Thread(target=self._pump, args=(self._proc, self._lines), daemon=True)
        reader.start()

    @staticmethod
    def _pump(proc: subprocess.Popen, sink: queue.Queue) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            sink.put(line)
        sink.put(None)

    def _alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:
                pass
        self._proc = None

    def close(self) -> None:
        with self._lock:
            self._kill()

    def run(self, command: str) -> ToolResult:
        with self._lock:
            return self._run_locked(command)

    def _run_locked(self, command: str) -> ToolResult:
        started = time.monotonic()
        restarted_note = ""
        if not self._alive():
            had_session = self._proc is not None
            self._kill()
            try:
                self._start()
            except (OSError, FileNotFoundError) as exc:
                return ToolResult.from_output(f"error: failed to start shell session: {exc}")
            if had_session:
                restarted_note = "note: previous shell session died and was restarted\n"
        sentinel = f"__AUTOPENTEST_DONE_{uuid.uuid4().hex}__"
        proc = self._proc
        assert proc is not None and proc.stdin is not None
        try:
            proc.stdin.write(f"{command}\nprintf '%s %s\\n' {sentinel} $?\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._kill()
            return ToolResult.from_output(
                "error: shell session died while sending the command; it will be "
                "restarted on the next call"
            )
        collected: list[str] = []
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._kill()
                return ToolResult.from_output(
                    restarted_note
                    + f"error: command timed out after {self.timeout:g} seconds; "
                    "the shell session was reset",
                    duration=time.monotonic() - started,
                )
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                continue
            if line is None:
                self._kill()
                return ToolResult.from_output(
                    restarted_note + "".join(collected) + "\nerror: shell session closed".lstrip(),
                    duration=time.monotonic() - started,
                )
            if line.startswith(sentinel):
                status_text = line[len(sentinel) :].strip()
                status = int(status_text) if status_text.isdigit() else None
                return ToolResult.from_output(
                    restarted_note + "".join(collected),
                    exit_status=status,
                    duration=time.monotonic() - started,
                )
            collected.append(line)
