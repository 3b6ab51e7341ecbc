from __future__ import annotations

import threading
from pathlib import Path

import pytest

from autopentest.domain import Target
from autopentest.nvd import FixtureTransport, NvdClient, RateLimiter

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def two_port_xml() -> str:
    return (FIXTURES / "scan_two_ports.xml").read_text(encoding="utf-8")


@pytest.fixture
def target() -> Target:
    return Target(host="10.10.11.239", own_ip="10.10.14.2", username="root")


class FakeClock:
    """Deterministic, thread-safe clock; sleeping advances the time."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._now += max(seconds, 0.0)

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)


@pytest.fixture
def fake_clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def offline_nvd(fixtures_dir: Path) -> NvdClient:
    transport = FixtureTransport(fixtures_dir / "nvd")
    # generous limiter so unit tests never stall on the real clock
    return NvdClient(transport=transport, rate_limiter=RateLimiter(limit=10_000))
