"""Per-run tool execution: binds a worker's registry to live tool instances,
routes approval-requiring calls through the review gate first, and guarantees
that every outcome (including failures) comes back as a ToolResult the agent
loop can continue from.
"""

from __future__ import annotations

import logging
from typing import Any, Mapping

from ..approval import ApprovalGate, decline_message
from ..domain import ToolCallRequest, WorkerName
from ..nvd import NotFound, NvdClient, NvdError, NvdQuery
from .base import ToolResult, registry_for
from .browser import BrowserTools
from .listener import DEFAULT_LISTEN_PORT, ListenerError, ReverseListener
from .script import ScriptRuntime
from .shells import PersistentShell, ProcessRunner, TempShell
from .websearch import WebSearch

logger = logging.getLogger(__name__)

# Argument carrying the human-reviewable payload, per approval-gated tool.
_REVIEWED_ARGUMENT = {
    "temp_shell": "command",
    "persistent_shell": "command",
    "reverse_exec": "command",
    "run_script": "source",
}


class RunToolset:
    """Tool instances owned by one run: a single persistent shell and reverse
    listener shared by all of the run's worker tasks."""

    def __init__(
        self,
        *,
        approval_gate: ApprovalGate,
        runner: ProcessRunner | None = None,
        web_search: WebSearch | None = None,
        browser: BrowserTools | None = None,
        nvd: NvdClient | None = None,
        listener_port: int = DEFAULT_LISTEN_PORT,
        shell_timeout: float = 300.0,
        script_timeout: float = 600.0,
        script_interpreter: tuple[str, ...] | None = None,
    ) -> None:
        self.approval_gate = approval_gate
        self.runner = runner if runner is not None else ProcessRunner()
        self.temp_shell = TempShell(runner=self.runner, timeout=shell_timeout)
        self.persistent_shell = PersistentShell(runner=self.runner, timeout=shell_timeout)
        script_kwargs: dict[str, Any] = {"runner": self.runner, "timeout": script_timeout}
        if script_interpreter is not None:
            script_kwargs["interpreter"] = script_interpreter
        self.script_runtime = ScriptRuntime(**script_kwargs)
        self.web_search = web_search
        self.browser = browser if browser is not None else BrowserTools()
        self.nvd = nvd
        self.listener = ReverseListener(port=listener_port)

    def close(self) -> None:
        self.persistent_shell.close()
        self.listener.stop()

    def belt(self, worker: WorkerName) -> "ToolBelt":
        return ToolBelt(self, worker)


class ToolBelt:
    """Dispatch surface for one worker task."""

    def __init__(self, toolset: RunToolset, worker: WorkerName) -> None:
        self.toolset = toolset
        self.worker = worker
        self.registry = registry_for(worker)

    def execute(self, call: ToolCallRequest) -> ToolResult:
        spec = self.registry.get(call.name)
        if spec is None:
            return ToolResult.from_output(
                f"error: unknown tool {call.name!r}; available tools: "
                + ", ".join(self.registry.names())
            )
        if spec.requires_approval:
            reviewed = str(call.arguments.get(_REVIEWED_ARGUMENT[call.name], ""))
            approved = self.toolset.approval_gate.review(reviewed, call.name, self.worker)
            if not approved:
                return ToolResult.from_output(decline_message())
        try:
            return self._dispatch(call.name, call.arguments)
        except ListenerError as exc:
            return ToolResult.from_output(f"error: {exc}")
        except NotFound as exc:
            return ToolResult.from_output(f"not found: {exc}")
        except NvdError as exc:
            return ToolResult.from_output(f"vulnerability database error: {exc}")
        except Exception as exc:
            logger.exception("tool %s failed", call.name)
            return ToolResult.from_output(f"tool error ({call.name}): {exc}")

    def _dispatch(self, name: str, args: Mapping[str, Any]) -> ToolResult:
        toolset = self.toolset
        if name == "temp_shell":
            return toolset.temp_shell.run(str(args.get("command", "")))
        if name == "persistent_shell":
            return toolset.persistent_shell.run(str(args.get("command", "")))
        if name == "run_script":
            return toolset.script_runtime.run(str(args.get("source", "")))
        if name == "web_search":
            if toolset.web_search is None:
                return ToolResult.from_output("search unavailable: no provider configured")
            return toolset.web_search.run(str(args.get("query", "")))
        if name == "reverse_listener_start":
            port = int(args.get("port", toolset.listener.port))
            if toolset.listener.port != port:
                toolset.listener.stop()
                toolset.listener = ReverseListener(port=port)
            toolset.listener.start()
            return ToolResult.from_output(
                f"listening for a reverse connection on port {port}"
            )
        if name == "reverse_exec":
            return toolset.listener.exec(str(args.get("command", "")))
        if name == "browser_navigate":
            return toolset.browser.navigate(str(args.get("url", "")))
        if name == "browser_back":
            return toolset.browser.back()
        if name == "browser_click":
            return toolset.browser.click(str(args.get("selector", "")))
        if name == "browser_extract_text":
            return toolset.browser.extract_text()
        if name == "browser_extract_links":
            return toolset.browser.extract_links()
        if name == "browser_element_text":
            return toolset.browser.element_text(str(args.get("selector", "")))
        if name == "browser_current_url":
            return toolset.browser.current_url()
        if name == "nvd_get_cve":
            return self._nvd_get_cve(str(args.get("cve_id", "")))
        if name == "nvd_search_cves":
            return self._nvd_search_cves(args)
        if name == "nvd_search_cpes":
            return self._nvd_search_cpes(str(args.get("keyword", "")))
        return ToolResult.from_output(f"error: tool {name!r} has no implementation")

    def _require_nvd(self) -> NvdClient:
        nvd = self.toolset.nvd
        if nvd is None:
            raise NvdError("no vulnerability database client configured")
        return nvd

    def _nvd_get_cve(self, cve_id: str) -> ToolResult:
        record = self._require_nvd().get_cve(cve_id)
        score = f"{record.cvss_score:g}" if record.cvss_score is not None else "n/a"
        refs = "\n".join(record.references[:5])
        return ToolResult.from_output(
            f"{record.id} (CVSS {score})\n{record.description}\n{refs}".rstrip()
        )

    def _nvd_search_cves(self, args: Mapping[str, Any]) -> ToolResult:
        cpe_name = str(args.get("cpe_name", "") or "")
        keyword = str(args.get("keyword", "") or "")
        if cpe_name:
            query = NvdQuery(kind="by_cpe_name", parameter=cpe_name)
        elif keyword:
            query = NvdQuery(kind="by_keyword", parameter=keyword)
        else:
            return ToolResult.from_output("error: provide cpe_name or keyword")
        page = self._require_nvd().search_cves(query)
        if not page.records:
            return ToolResult.from_output("no CVEs found")
        lines = [f"{page.total} CVEs total; showing {len(page.records)}:"]
        for record in page.records:
            score = f"{record.cvss_score:g}" if record.cvss_score is not None else "n/a"
            lines.append(f"- {record.id} (CVSS {score}): {record.description[:200]}")
        return ToolResult.from_output("\n".join(lines))

    def _nvd_search_cpes(self, keyword: str) -> ToolResult:
        page = self._require_nvd().search_cpes(keyword)
        if not page.names:
            return ToolResult.from_output("no CPEs found")
        return ToolResult.from_output("\n".join(page.names))
