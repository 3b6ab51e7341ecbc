"""Initial target enumeration: run the port scanner with service/OS detection,
extract services and CPEs from its XML output, enrich with known CVEs, and
render the context block handed to the planning agents.
"""

from __future__ import annotations

import logging
import os
import subprocess
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .domain import CveRecord, ServiceDiscoveryReport, ServiceRecord, Target
from .nvd import NvdClient, NvdError

logger = logging.getLogger(__name__)

DEFAULT_SCAN_TIMEOUT = 15 * 60.0
SCAN_FIXTURE_ENV_VAR = "AUTOPENTEST_SCAN_FIXTURE"


class DiscoveryError(RuntimeError):
    pass


class ScannerMissing(DiscoveryError):
    pass


class ScanTimeout(DiscoveryError):
    pass


class ScanParseError(DiscoveryError):
    def __init__(self, message: str, offset: int | None = None) -> None:
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class ScanConfig:
    """How the scanner is invoked. The default scans the full TCP range with
    service/version detection and, when running privileged, OS detection."""

    executable: str = "nmap"
    ports: str = "-"
    extra_args: tuple[str, ...] = ()
    timeout: float = DEFAULT_SCAN_TIMEOUT
    os_detection: bool = True
    fixture_xml: str | Path | None = None

    def argv(self, host: str) -> list[str]:
        args = [self.executable, "-p", self.ports, "-sV"]
        if self.os_detection and _is_privileged():
            args.append("-O")
        args.extend(self.extra_args)
        args.extend(["-oX", "-", host])
        return args


def _is_privileged() -> bool:
    getter = getattr(os, "geteuid", None)
    return getter is not None and getter() == 0


@dataclass
class ScanInvocation:
    argv: list[str]
    timeout: float
    raw_xml: str = ""
    stderr: str = ""
    exit_status: int | None = None


def run_scan(target: Target, config: ScanConfig) -> ScanInvocation:
    """Execute the scanner (or read the configured fixture) and capture XML."""
    if config.fixture_xml is not None:
        path = Path(config.fixture_xml)
        if not path.exists():
            raise ScannerMissing(f"scan fixture not found: {path}")
        return ScanInvocation(argv=["fixture", str(path)], timeout=config.timeout,
                              raw_xml=path.read_text(encoding="utf-8"), exit_status=0)
    argv = config.argv(target.host)
    if config.os_detection and not _is_privileged():
        logger.warning("not running as root: OS detection disabled for this scan")
    try:
        completed = subprocess.run(
            argv,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            timeout=config.timeout,
        )
    except FileNotFoundError as exc:
        raise ScannerMissing(
            f"scanner executable {config.executable!r} not found; install it or set "
            "the scanner path in the scan configuration"
        ) from exc
    except subprocess.TimeoutExpired as exc:
        raise ScanTimeout(f"scan exceeded {config.timeout:g} seconds") from exc
    return ScanInvocation(
        argv=argv,
        timeout=config.timeout,
        raw_xml=completed.stdout or "",
        stderr=completed.stderr or "",
        exit_status=completed.returncode,
    )


def cpe22_to_cpe23(cpe: str) -> str:
    """Upgrade a legacy cpe:/ URI to CPE 2.3 formatted-string form; CPE 2.3
    inputs pass through unchanged."""
    if cpe.startswith("cpe:2.3:"):
        return cpe
    if not cpe.startswith("cpe:/"):
        raise ValueError(f"not a CPE URI: {cpe!r}")
    components = cpe[len("cpe:/") :].split(":")
    components += ["*"] * (7 - len(components))
    part, vendor, product, version, update, edition, language = [
        c if c else "*" for c in components[:7]
    ]
    return ":".join(
        ["cpe", "2.3", part, vendor, product, version, update, edition, language]
        + ["*", "*", "*", "*"]
    )


def parse_scan_xml(raw_xml: str) -> tuple[str | None, tuple[ServiceRecord, ...]]:
    """Extract the OS guess and one ServiceRecord per open port from scanner XML."""
    try:
        root = ET.fromstring(raw_xml)
    except ET.ParseError as exc:
        position = getattr(exc, "position", None)
        offset = None
        if position is not None:
            line, column = position
            offset = sum(len(l) + 1 for l in raw_xml.splitlines()[: line - 1]) + column
        raise ScanParseError(f"malformed scanner XML: {exc}", offset=offset) from exc
    if root.tag != "nmaprun":
        raise ScanParseError(f"unexpected root element {root.tag!r}")

    os_guess: str | None = None
    services: list[ServiceRecord] = []
    for host in root.findall("host"):
        os_element = host.find("os")
        if os_element is not None and os_guess is None:
            matches = os_element.findall("osmatch")
            if matches:
                best = max(matches, key=lambda m: int(m.get("accuracy", "0")))
                os_guess = best.get("name")
        for port in host.findall(".//port"):
            state = port.find("state")
            if state is None or state.get("state") != "open":
                continue
            service = port.find("service")
            cpes = []
            name = ""
            product = None
            version = None
            if service is not None:
                name = service.get("name") or ""
                product = service.get("product")
                version = service.get("version")
                for cpe in service.findall("cpe"):
                    if cpe.text and cpe.text.strip():
                        try:
                            cpes.append(cpe22_to_cpe23(cpe.text.strip()))
                        except ValueError:
                            logger.warning("skipping unparseable CPE %r", cpe.text)
            services.append(
                ServiceRecord(
                    port=int(port.get("portid", "0")),
                    transport=port.get("protocol", "tcp"),
                    service_name=name,
                    product=product,
                    version=version,
                    cpes=tuple(cpes),
                )
            )
    services.sort(key=lambda s: (s.port, s.transport))
    return os_guess, tuple(services)


def enrich_with_cves(
    services: tuple[ServiceRecord, ...] | list[ServiceRecord],
    nvd: NvdClient,
) -> tuple[tuple[CveRecord, ...], tuple[str, ...]]:
    """Look up known CVEs for every discovered CPE. Per-CPE failures degrade to
    empty contributions and are reported, never raised."""
    seen: dict[str, CveRecord] = {}
    failures: list[str] = []
    looked_up: set[str] = set()
    for service in services:
        for cpe in service.cpes:
            if cpe in looked_up:
                continue
            looked_up.add(cpe)
            try:
                for record in nvd.cves_for_cpe(cpe):
                    seen.setdefault(record.id, record)
            except NvdError as exc:
                failures.append(f"{cpe}: {exc}")
                logger.warning("CVE enrichment failed for %s: %s", cpe, exc)
    ordered = tuple(seen[cve_id] for cve_id in sorted(seen))
    return ordered, tuple(failures)


def _first_sentence(text: str) -> str:
    stripped = " ".join(text.split())
    dot = stripped.find(". ")
    if dot != -1:
        return stripped[: dot + 1]
    return stripped


def render_services_context(
    target: Target,
    os_guess: str | None,
    services: tuple[ServiceRecord, ...],
    cves: tuple[CveRecord, ...],
) -> str:
    """Deterministic human-readable block used as the `{services}` prompt context."""
    if not services:
        return "No open ports detected."
    lines = [f"Open ports on {target.host}:"]
    for service in services:
        parts = [f"- {service.port}/{service.transport} {service.service_name}".rstrip()]
        if service.product:
            parts.append(service.product)
        if service.version:
            parts.append(service.version)
        line = " ".join(parts)
        if service.cpes:
            line += f" ({', '.join(service.cpes)})"
        lines.append(line)
    if os_guess:
        lines.append(f"OS guess: {os_guess}")
    if cves:
        lines.append("Known CVEs for discovered services:")
        for cve in cves:
            score = f"CVSS {cve.cvss_score:g}" if cve.cvss_score is not None else "CVSS n/a"
            lines.append(f"- {cve.id} ({score}): {_first_sentence(cve.description)}")
    return "\n".join(lines)


def discover(target: Target, config: ScanConfig, nvd: NvdClient) -> ServiceDiscoveryReport:
    """Full discovery pass: scan, parse, enrich, render. The report is immutable
    and reused by every later agent in the run."""
    invocation = run_scan(target, config)
    os_guess, services = parse_scan_xml(invocation.raw_xml)
    cves, failures = enrich_with_cves(services, nvd)
    context = render_services_context(target, os_guess, services, cves)
    return ServiceDiscoveryReport(
        target=target,
        os_guess=os_guess,
        services=services,
        cves=cves,
        rendered_context=context,
        enrichment_errors=failures,
    )
