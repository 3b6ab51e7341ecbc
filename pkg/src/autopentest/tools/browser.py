"""Browser actions over a pluggable driver.

The driver abstraction matches a remote-debugging session against a separately
launched headless browser; StubBrowserDriver serves canned pages for tests and
offline use. Driver errors surface as result text so the agent can react.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .base import ToolResult


class BrowserError(RuntimeError):
    pass


class DriverUnavailable(BrowserError):
    pass


class NavigationTimeout(BrowserError):
    pass


class SelectorNotFound(BrowserError):
    pass


@dataclass
class StubPage:
    text: str = ""
    links: tuple[tuple[str, str], ...] = ()
    elements: dict[str, str] = field(default_factory=dict)
    clicks: dict[str, str] = field(default_factory=dict)


class StubBrowserDriver:
    """Canned-page driver: a dict of URL -> StubPage plus a history stack."""

    def __init__(self, pages: dict[str, StubPage]) -> None:
        self.pages = pages
        self._history: list[str] = []

    def _page(self) -> StubPage:
        if not self._history:
            raise NavigationTimeout("no page loaded yet")
        return self.pages[self._history[-1]]

    def navigate(self, url: str) -> None:
        if url not in self.pages:
            raise NavigationTimeout(f"no route to {url}")
        self._history.append(url)

    def back(self) -> None:
        if len(self._history) < 2:
            raise NavigationTimeout("no previous page in history")
        self._history.pop()

    def click(self, selector: str) -> None:
        page = self._page()
        if selector not in page.clicks:
            raise SelectorNotFound(f"no element matches {selector!r}")
        self._history.append(page.clicks[selector])

    def extract_text(self) -> str:
        return self._page().text

    def extract_links(self) -> list[tuple[str, str]]:
        return list(self._page().links)

    def element_text(self, selector: str) -> str:
        page = self._page()
        if selector not in page.elements:
            raise SelectorNotFound(f"no element matches {selector!r}")
        return page.elements[selector]

    def current_url(self) -> str:
        if not self._history:
            raise NavigationTimeout("no page loaded yet")
        return self._history[-1]


class BrowserTools:
    """Maps browser tool calls onto a driver session, rendering outcomes (and
    failures) as tool text."""

    def __init__(self, driver=None) -> None:
        self.driver = driver

    def _require_driver(self):
        if self.driver is None:
            raise DriverUnavailable(
                "no browser driver configured; launch a headless browser with remote "
                "debugging enabled and plug a driver into the run"
            )
        return self.driver

    def _do(self, action) -> ToolResult:
        try:
            return ToolResult.from_output(action())
        except BrowserError as exc:
            return ToolResult.from_output(f"browser error: {exc}")

    def navigate(self, url: str) -> ToolResult:
        def act() -> str:
            driver = self._require_driver()
            driver.navigate(url)
            return f"navigated to {url}"

        return self._do(act)

    def back(self) -> ToolResult:
        def act() -> str:
            driver = self._require_driver()
            driver.back()
            return f"navigated back to {driver.current_url()}"

        return self._do(act)

    def click(self, selector: str) -> ToolResult:
        def act() -> str:
            driver = self._require_driver()
            driver.click(selector)
            return f"clicked {selector}; now at {driver.current_url()}"

        return self._do(act)

    def extract_text(self) -> ToolResult:
        return self._do(lambda: self._require_driver().extract_text())

    def extract_links(self) -> ToolResult:
        def act() -> str:
            links = self._require_driver().extract_links()
            if not links:
                return "no links on page"
            return "\n".join(f"{text} -> {href}" for text, href in links)

        return self._do(act)

    def element_text(self, selector: str) -> ToolResult:
        return self._do(lambda: self._require_driver().element_text(selector))

    def current_url(self) -> ToolResult:
        return self._do(lambda: self._require_driver().current_url())
