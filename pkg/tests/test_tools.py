from __future__ import annotations



import pytest
from hypothesis import given, strategies as st

from autopentest.approval import (
    DECLINE_MESSAGE,
    ApprovalGate,
    ApprovalPolicy,
)
from autopentest.domain import ToolCallRequest, WorkerName
from autopentest.events import EventKind
from autopentest.tools.base import (
    TRUNCATE_KEEP,
    TRUNCATE_THRESHOLD,
    registry_for,
    truncate_output,
    truncation_marker,
)
from autopentest.tools.belt import RunToolset
from autopentest.tools.browser import BrowserTools, StubBrowserDriver, StubPage
from autopentest.tools.listener import NoConnectionYet, PortInUse, ReverseListener
from autopentest.tools.script import ScriptRuntime
from autopentest.tools.shells import PersistentShell, ProcessRunner, TempShell
from autopentest.tools.websearch import FixtureSearchProvider, WebSearch


class TestTruncation:
    def test_at_threshold_unchanged(self):
        text = "a" * TRUNCATE_THRESHOLD
        assert truncate_output(text) == text

    def test_above_threshold_keeps_edges(self):
        text = "".join(chr(ord("a") + i % 26) for i in range(60_000))
        out = truncate_output(text)
        assert out.startswith(text[:TRUNCATE_KEEP])
        assert out.endswith(text[-TRUNCATE_KEEP:])
        middle = out[TRUNCATE_KEEP:-TRUNCATE_KEEP]
        assert middle == truncation_marker(60_000 - 2 * TRUNCATE_KEEP)

    def test_empty(self):
        assert truncate_output("") == ""

    @given(st.integers(0, 100_000))
    def test_never_grows_and_equality_iff_short(self, length):
        text = "x" * length
        out = truncate_output(text)
        assert len(out) <= max(len(text), 1) or length == 0
        if length <= TRUNCATE_THRESHOLD:
            assert out == text
        else:
            assert len(out) < len(text)


class TestRegistries:
    COMMON = {
        "web_search",
        "temp_shell",
        "persistent_shell",
        "run_script",
        "browser_navigate",
        "browser_back",
        "browser_click",
        "browser_extract_text",
        "browser_extract_links",
        "browser_element_text",
        "browser_current_url",
    }

    @pytest.mark.parametrize("worker", list(WorkerName))
    def test_rules_hold_for_every_worker(self, worker):
        names = set(registry_for(worker).names())
        assert self.COMMON <= names
        has_nvd = {"nvd_get_cve", "nvd_search_cves", "nvd_search_cpes"} <= names
        has_listener = {"reverse_listener_start", "reverse_exec"} <= names
        if worker is WorkerName.ENUMERATION:
            assert has_nvd and not has_listener
        else:
            assert has_listener and not has_nvd

    def test_enumeration_specifics(self):
        names = set(registry_for(WorkerName.ENUMERATION).names())
        assert "nvd_get_cve" in names and "reverse_listener_start" not in names

    def test_injection_specifics(self):
        names = set(registry_for(WorkerName.INJECTION).names())
        assert "reverse_listener_start" in names and "nvd_get_cve" not in names

    def test_approval_flags(self):
        registry = registry_for(WorkerName.INJECTION)
        gated = {t.name for t in registry.tools if t.requires_approval}
        assert gated == {"temp_shell", "persistent_shell", "run_script", "reverse_exec"}


class TestTempShell:
    def test_echo(self):
        result = TempShell(ProcessRunner()).run("echo hi")
        assert result.text == "hi\n" and result.exit_status == 0

    def test_no_state_between_calls(self):
        shell = TempShell(ProcessRunner())
        shell.run("export MARKER=present")
        result = shell.run('echo "${MARKER}"')
        assert result.text == "\n"

    def test_timeout_rendered_as_text(self):
        result = TempShell(ProcessRunner(), timeout=0.2).run("sleep 5")
        assert "timed out" in result.text and result.exit_status is None

    def test_spawn_failure_rendered_as_text(self):
        result = TempShell(ProcessRunner(), shell_path="/nonexistent/shell").run("echo hi")
        assert result.text.startswith("error: failed to spawn shell")


class TestPersistentShell:
    def test_context_persists(self):
        shell = PersistentShell()
        try:
            assert shell.run("cd /tmp").exit_status == 0
            assert shell.run("pwd").text.strip() == "/tmp"
            shell.run("STATE_VAR=kept")
            assert shell.run('echo "$STATE_VAR"').text.strip() == "kept"
        finally:
            shell.close()

    def test_output_resembling_a_sentinel_is_returned_intact(self):
        shell = PersistentShell()
        try:
            fake = "__AUTOPENTEST_DONE_0123456789abcdef0123456789abcdef__ 0"
            result = shell.run(f"echo '{fake}'")
            assert fake in result.text
            assert result.exit_status == 0
        finally:
            shell.close()

    def test_dead_session_reported_then_restarted(self):
        shell = PersistentShell()
        try:
            first = shell.run("exit 7")
            # the shell died executing this command; the next call must succeed
            second = shell.run("echo back")
            assert "restarted" in second.text or second.text.strip() == "back"
            third = shell.run("echo again")
            assert "again" in third.text
        finally:
            shell.close()

    def test_timeout_resets_session(self):
        shell = PersistentShell(timeout=0.3)
        try:
            result = shell.run("sleep 5")
            assert "timed out" in result.text
            follow_up = shell.run("echo alive")
            assert "alive" in follow_up.text
        finally:
            shell.close()


class _FakeRemoteShell:
    """Loopback stand-in for a reverse-connected shell on the target."""

    def __init__(self, port: int, replies: dict[str, str]):
        import socket
        import threading

        self.replies = replies
        self._sock = socket.create_connection(("127.0.0.1", port))
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self):
        buffer = b""
        last_command = ""
        while True:
            try:
                chunk = self._sock.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            buffer += chunk
            while b"\n" in buffer:
                line, buffer = buffer.split(b"\n", 1)
                text = line.decode()
                if text.startswith("echo "):
                    reply = self.replies.get(last_command, "")
                    payload = (reply + "\n" if reply else "") + text[len("echo "):] + "\n"
                    self._sock.sendall(payload.encode())
                else:
                    last_command = text

    def close(self):
        self._sock.close()


class TestReverseListener:
    def test_exec_before_connection(self):
        listener = ReverseListener(port=0)
        with pytest.raises(NoConnectionYet):
            listener.exec("id")

    def test_port_in_use(self):
        import socket

        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        listener = ReverseListener(port=port, bind_host="127.0.0.1")
        try:
            with pytest.raises(PortInUse):
                listener.start()
        finally:
            blocker.close()

    def test_loopback_fake_shell(self):
        listener = ReverseListener(port=0, bind_host="127.0.0.1")
        listener.start()
        fake = _FakeRemoteShell(listener.port, {"id": "uid=0(root) gid=0(root) groups=0(root)"})
        try:
            assert listener.wait_for_connection(timeout=5)
            result = listener.exec("id", timeout=5)
            assert "uid=0(root)" in result.text
        finally:
            fake.close()
            listener.stop()


class TestScriptRuntime:
    def test_print_one_liner(self):
        result = ScriptRuntime(ProcessRunner()).run("print('hello from script')")
        assert result.text == "hello from script\n" and result.exit_status == 0

    def test_syntax_error_reports_nonzero_exit(self):
        result = ScriptRuntime(ProcessRunner()).run("def broken(:\n    pass")
        assert result.exit_status not in (0, None)
        assert "SyntaxError" in result.text
        assert "exited with status" in result.text

    def test_large_output_truncated(self):
        result = ScriptRuntime(ProcessRunner()).run("print('x' * 100_000)")
        assert result.truncated is True
        assert len(result.text) < 100_000


class TestWebSearch:
    def test_fixture_rendering(self, fixtures_dir):
        search = WebSearch(FixtureSearchProvider.from_file(fixtures_dir / "search_fixture.json"))
        result = search.run("joomla 4.2 exploit")
        assert "CVE-2023-23752" in result.text
        assert "https://" in result.text

    def test_empty_query_precondition(self):
        search = WebSearch(FixtureSearchProvider({}))
        with pytest.raises(ValueError):
            search.run("   ")

    def test_provider_outage_rendered(self):
        class Broken:
            def search(self, query):
                raise RuntimeError("boom")

        result = WebSearch(Broken()).run("anything")
        assert result.text.startswith("search unavailable:")


def _stub_driver() -> StubBrowserDriver:
    return StubBrowserDriver(
        {
            "http://target/": StubPage(
                text="Welcome to the target",
                links=(("Admin", "http://target/admin"), ("Docs", "http://target/docs")),
                elements={"h1": "Welcome"},
                clicks={"a#admin": "http://target/admin"},
            ),
            "http://target/admin": StubPage(text="Admin login", elements={"h1": "Admin"}),
        }
    )


class TestBrowserTools:
    def test_extract_links_canned_page(self):
        browser = BrowserTools(_stub_driver())
        browser.navigate("http://target/")
        result = browser.extract_links()
        assert "Admin -> http://target/admin" in result.text

    def test_click_missing_selector(self):
        browser = BrowserTools(_stub_driver())
        browser.navigate("http://target/")
        result = browser.click("#nope")
        assert "browser error" in result.text and "#nope" in result.text

    def test_current_url_after_navigate(self):
        browser = BrowserTools(_stub_driver())
        browser.navigate("http://target/admin")
        assert browser.current_url().text == "http://target/admin"

    def test_back(self):
        browser = BrowserTools(_stub_driver())
        browser.navigate("http://target/")
        browser.navigate("http://target/admin")
        browser.back()
        assert browser.current_url().text == "http://target/"

    def test_no_driver_configured(self):
        result = BrowserTools(None).extract_text()
        assert "browser error" in result.text


class CountingRunner(ProcessRunner):
    """Spawn-counting double; optionally executes nothing."""

    def __init__(self, execute: bool = True):
        self.spawned: list[list[str]] = []
        self.execute = execute

    def run(self, argv, *, timeout, input_text=None):
        self.spawned.append(list(argv))
        if not self.execute:
            return "", 0
        return super().run(argv, timeout=timeout, input_text=input_text)

    def popen(self, argv):
        self.spawned.append(list(argv))
        return super().popen(argv)


class TestToolBelt:
    def _toolset(self, reader=None, mode="auto", events=None):
        emit = None
        if events is not None:
            emit = lambda kind, payload: events.append((kind, payload))
        gate = ApprovalGate(ApprovalPolicy(mode=mode), reader=reader, emit=emit)
        runner = CountingRunner()
        toolset = RunToolset(approval_gate=gate, runner=runner)
        return toolset, runner

    def test_denied_command_spawns_nothing(self):
        events: list = []
        toolset, runner = self._toolset(reader=lambda prompt: "n", mode="interactive", events=events)
        belt = toolset.belt(WorkerName.INJECTION)
        result = belt.execute(ToolCallRequest(id="1", name="temp_shell", arguments={"command": "rm -rf /"}))
        assert result.text == DECLINE_MESSAGE
        assert runner.spawned == []
        kinds = [k for k, _ in events]
        assert kinds == [EventKind.APPROVAL_REQUESTED, EventKind.APPROVAL_RESOLVED]

    def test_approved_command_executes(self):
        toolset, runner = self._toolset(reader=lambda prompt: "y", mode="interactive")
        belt = toolset.belt(WorkerName.INJECTION)
        result = belt.execute(ToolCallRequest(id="1", name="temp_shell", arguments={"command": "echo ok"}))
        assert result.text == "ok\n"
        assert len(runner.spawned) == 1

    def test_unknown_tool_is_recoverable_text(self):
        toolset, _ = self._toolset()
        belt = toolset.belt(WorkerName.INJECTION)
        result = belt.execute(ToolCallRequest(id="1", name="wat", arguments={}))
        assert "unknown tool" in result.text

    def test_tool_outside_registry_unknown(self):
        # Enumeration has no reverse listener; the call must not reach the tool
        toolset, _ = self._toolset()
        belt = toolset.belt(WorkerName.ENUMERATION)
        result = belt.execute(ToolCallRequest(id="1", name="reverse_exec", arguments={"command": "id"}))
        assert "unknown tool" in result.text

    def test_listener_errors_rendered(self):
        toolset, _ = self._toolset()
        belt = toolset.belt(WorkerName.INJECTION)
        result = belt.execute(ToolCallRequest(id="1", name="reverse_exec", arguments={"command": "id"}))
        assert "error:" in result.text and "no reverse connection" in result.text

    def test_nvd_tool_for_enumeration(self, offline_nvd):
        gate = ApprovalGate(ApprovalPolicy(mode="auto"))
        toolset = RunToolset(approval_gate=gate, runner=CountingRunner(), nvd=offline_nvd)
        belt = toolset.belt(WorkerName.ENUMERATION)
        result = belt.execute(
            ToolCallRequest(id="1", name="nvd_get_cve", arguments={"cve_id": "CVE-2021-44228"})
        )
        assert "CVE-2021-44228" in result.text and "CVSS 10" in result.text
