"""Tool metadata, output truncation, and per-worker tool registries.

Executable tool implementations live in sibling modules; this module is pure
data so registry rules can be checked without spawning anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from ..domain import WorkerName

TRUNCATE_THRESHOLD = 30_000
TRUNCATE_KEEP = 3_000


def truncation_marker(omitted: int) -> str:
    return f"\n[... output truncated: {omitted} characters omitted ...]\n"


def truncate_output(text: str) -> str:
    """Cap tool output: anything over 30,000 characters is reduced to its first
    and last 3,000 characters around an omission marker."""
    if len(text) <= TRUNCATE_THRESHOLD:
        return text
    omitted = len(text) - 2 * TRUNCATE_KEEP
    return text[:TRUNCATE_KEEP] + truncation_marker(omitted) + text[-TRUNCATE_KEEP:]


@dataclass(frozen=True)
class ToolResult:
    text: str
    exit_status: int | None = None
    duration: float = 0.0
    truncated: bool = False

    @classmethod
    def from_output(
        cls, raw: str, exit_status: int | None = None, duration: float = 0.0
    ) -> "ToolResult":
        truncated = len(raw) > TRUNCATE_THRESHOLD
        return cls(
            text=truncate_output(raw),
            exit_status=exit_status,
            duration=duration,
            truncated=truncated,
        )


@dataclass(frozen=True)
class ToolParameter:
    name: str
    type: str = "string"
    description: str = ""
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: tuple[ToolParameter, ...] = ()
    requires_approval: bool = False

    def json_schema(self) -> dict[str, Any]:
        return {
            "type": "object",
            "properties": {
                p.name: {"type": p.type, "description": p.description} for p in self.parameters
            },
            "required": [p.name for p in self.parameters if p.required],
        }


@dataclass(frozen=True)
class ToolRegistry:
    worker: WorkerName
    tools: tuple[ToolSpec, ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tools]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate tool names in registry for {self.worker.value}")

    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tools)

    def get(self, name: str) -> ToolSpec | None:
        for tool in self.tools:
            if tool.name == name:
                return tool
        return None


def _command_param(description: str) -> tuple[ToolParameter, ...]:
    return (ToolParameter("command", description=description),)


WEB_SEARCH = ToolSpec(
    "web_search",
    "Search the web and return the top results as title, URL and snippet.",
    (ToolParameter("query", description="Search query text."),),
)

TEMP_SHELL = ToolSpec(
    "temp_shell",
    "Run a shell command in a clean new sub-process; no state survives between calls.",
    _command_param("Shell command to execute."),
    requires_approval=True,
)

PERSISTENT_SHELL = ToolSpec(
    "persistent_shell",
    "Run a shell command in a long-lived shell that keeps its working directory "
    "and environment across calls.",
    _command_param("Shell command to execute in the persistent session."),
    requires_approval=True,
)

RUN_SCRIPT = ToolSpec(
    "run_script",
    "Execute an entire Python script with the locally installed interpreter and libraries.",
    (ToolParameter("source", description="Full source code of the script."),),
    requires_approval=True,
)

REVERSE_LISTENER_START = ToolSpec(
    "reverse_listener_start",
    "Start listening for an incoming reverse-shell connection from the target.",
    (ToolParameter("port", type="integer", description="Local port to listen on.", required=False),),
)

REVERSE_EXEC = ToolSpec(
    "reverse_exec",
    "Run a command on the remote target over the established reverse-shell connection.",
    _command_param("Command to execute on the remote target."),
    requires_approval=True,
)

BROWSER_NAVIGATE = ToolSpec(
    "browser_navigate",
    "Navigate the headless browser to a URL.",
    (ToolParameter("url", description="Absolute URL to open."),),
)
BROWSER_BACK = ToolSpec("browser_back", "Navigate back to the previous page.")
BROWSER_CLICK = ToolSpec(
    "browser_click",
    "Click the DOM element matching a CSS selector.",
    (ToolParameter("selector", description="CSS selector of the element."),),
)
BROWSER_EXTRACT_TEXT = ToolSpec(
    "browser_extract_text", "Extract the visible text of the current page."
)
BROWSER_EXTRACT_LINKS = ToolSpec(
    "browser_extract_links", "Extract all hyperlinks from the current page."
)
BROWSER_ELEMENT_TEXT = ToolSpec(
    "browser_element_text",
    "Return the inner text of the DOM element matching a CSS selector.",
    (ToolParameter("selector", description="CSS selector of the element."),),
)
BROWSER_CURRENT_URL = ToolSpec(
    "browser_current_url", "Return the URL of the current page."
)

NVD_GET_CVE = ToolSpec(
    "nvd_get_cve",
    "Fetch a specific CVE record from the vulnerability database by identifier.",
    (ToolParameter("cve_id", description="Identifier such as CVE-2021-44228."),),
)
NVD_SEARCH_CVES = ToolSpec(
    "nvd_search_cves",
    "Search the vulnerability database for CVEs by CPE name or keyword.",
    (
        ToolParameter("cpe_name", description="CPE 2.3 name to match.", required=False),
        ToolParameter("keyword", description="Free-text keyword search.", required=False),
    ),
)
NVD_SEARCH_CPES = ToolSpec(
    "nvd_search_cpes",
    "Search the vulnerability database for CPE names matching a keyword.",
    (ToolParameter("keyword", description="Keyword such as a product name."),),
)

COMMON_TOOLS: tuple[ToolSpec, ...] = (
    WEB_SEARCH,
    TEMP_SHELL,
    PERSISTENT_SHELL,
    RUN_SCRIPT,
    BROWSER_NAVIGATE,
    BROWSER_BACK,
    BROWSER_CLICK,
    BROWSER_EXTRACT_TEXT,
    BROWSER_EXTRACT_LINKS,
    BROWSER_ELEMENT_TEXT,
    BROWSER_CURRENT_URL,
)

REVERSE_TOOLS: tuple[ToolSpec, ...] = (REVERSE_LISTENER_START, REVERSE_EXEC)

NVD_TOOLS: tuple[ToolSpec, ...] = (NVD_GET_CVE, NVD_SEARCH_CVES, NVD_SEARCH_CPES)


def registry_for(worker: WorkerName) -> ToolRegistry:
    """Build a worker's tool registry: the common set everywhere, the reverse
    listener for everyone except Enumeration, and the vulnerability-database
    tools for Enumeration only."""
    tools = list(COMMON_TOOLS)
    if worker is WorkerName.ENUMERATION:
        tools.extend(NVD_TOOLS)
    else:
        tools.extend(REVERSE_TOOLS)
    return ToolRegistry(worker=worker, tools=tuple(tools))
