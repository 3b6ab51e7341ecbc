from __future__ import annotations

import pytest

from autopentest.discovery import (
    ScanConfig,
    ScanParseError,
    ScannerMissing,
    cpe22_to_cpe23,
    discover,
    enrich_with_cves,
    parse_scan_xml,
    render_services_context,
    run_scan,
)
from autopentest.domain import Target


class TestCpeConversion:
    def test_application_cpe(self):
        assert cpe22_to_cpe23("cpe:/a:openbsd:openssh:8.2p1") == (
            "cpe:2.3:a:openbsd:openssh:8.2p1:*:*:*:*:*:*:*"
        )

    def test_os_cpe_without_version(self):
        assert cpe22_to_cpe23("cpe:/o:linux:linux_kernel") == (
            "cpe:2.3:o:linux:linux_kernel:*:*:*:*:*:*:*:*"
        )

    def test_cpe23_passthrough(self):
        uri = "cpe:2.3:a:nginx:nginx:1.18.0:*:*:*:*:*:*:*"
        assert cpe22_to_cpe23(uri) == uri

    def test_component_count_is_eleven(self):
        converted = cpe22_to_cpe23("cpe:/a:x:y:1")
        assert len(converted.split(":")) == 13  # cpe + 2.3 + 11 components

    def test_garbage_rejected(self):
        with pytest.raises(ValueError):
            cpe22_to_cpe23("not-a-cpe")


class TestParseScanXml:
    def test_two_port_fixture(self, two_port_xml):
        os_guess, services = parse_scan_xml(two_port_xml)
        assert {s.port for s in services} == {22, 80}
        assert os_guess == "Linux 5.0 - 5.4"
        ssh = next(s for s in services if s.port == 22)
        assert ssh.service_name == "ssh"
        assert ssh.product == "OpenSSH"
        assert "cpe:2.3:a:openbsd:openssh:8.2p1:*:*:*:*:*:*:*" in ssh.cpes

    def test_single_port_fixture(self, fixtures_dir):
        xml = (fixtures_dir / "scan_one_port.xml").read_text()
        os_guess, services = parse_scan_xml(xml)
        assert len(services) == 1
        assert services[0].service_name == "ssh"
        assert os_guess is None

    def test_filtered_only_ports_empty(self, fixtures_dir):
        xml = (fixtures_dir / "scan_no_ports.xml").read_text()
        _, services = parse_scan_xml(xml)
        assert services == ()

    def test_truncated_xml_parse_error_with_offset(self, two_port_xml):
        with pytest.raises(ScanParseError) as excinfo:
            parse_scan_xml(two_port_xml[: len(two_port_xml) // 2])
        assert excinfo.value.offset is not None and excinfo.value.offset > 0

    def test_wrong_root_element(self):
        with pytest.raises(ScanParseError):
            parse_scan_xml("<notnmap></notnmap>")

    def test_parse_preserves_all_fields(self, two_port_xml):
        # nothing parsed is lost when re-rendered: port, product, version, CPEs
        _, services = parse_scan_xml(two_port_xml)
        rendered = render_services_context(Target(host="h"), None, services, ())
        for service in services:
            assert f"{service.port}/{service.transport}" in rendered
            if service.product:
                assert service.product in rendered
            if service.version:
                assert service.version in rendered
            for cpe in service.cpes:
                assert cpe in rendered


class TestEnrichment:
    def test_no_cpes_no_cves(self, offline_nvd):
        from autopentest.domain import ServiceRecord

        cves, failures = enrich_with_cves(
            [ServiceRecord(port=80, transport="tcp", service_name="http")], offline_nvd
        )
        assert cves == () and failures == ()

    def test_shared_cpe_deduplicated(self, offline_nvd):
        from autopentest.domain import ServiceRecord

        cpe = "cpe:2.3:a:nginx:nginx:1.18.0:*:*:*:*:*:*:*"
        services = [
            ServiceRecord(port=80, transport="tcp", service_name="http", cpes=(cpe,)),
            ServiceRecord(port=8080, transport="tcp", service_name="http-alt", cpes=(cpe,)),
        ]
        cves, _ = enrich_with_cves(services, offline_nvd)
        ids = [c.id for c in cves]
        assert ids == ["CVE-2021-23017"]

    def test_fixture_cves_returned(self, two_port_xml, offline_nvd):
        _, services = parse_scan_xml(two_port_xml)
        cves, failures = enrich_with_cves(services, offline_nvd)
        assert [c.id for c in cves] == ["CVE-2021-23017"]
        assert failures == ()

    def test_per_cpe_failure_degrades(self, offline_nvd):
        from autopentest.domain import ServiceRecord

        services = [
            ServiceRecord(
                port=1, transport="tcp", service_name="x",
                cpes=("cpe:2.3:a:unrecorded:thing:1:*:*:*:*:*:*:*",),
            )
        ]
        cves, failures = enrich_with_cves(services, offline_nvd)
        assert cves == ()
        assert len(failures) == 1 and "unrecorded" in failures[0]


class TestRenderContext:
    def test_empty_report(self):
        assert render_services_context(Target(host="h"), None, (), ()) == "No open ports detected."

    def test_golden_two_service_render(self, two_port_xml, offline_nvd, fixtures_dir, target):
        os_guess, services = parse_scan_xml(two_port_xml)
        cves, _ = enrich_with_cves(services, offline_nvd)
        rendered = render_services_context(target, os_guess, services, cves)
        golden = (fixtures_dir / "golden_services_context.txt").read_text(encoding="utf-8")
        assert rendered == golden.rstrip("\n")

    def test_cve_appears_exactly_once(self, two_port_xml, offline_nvd, target):
        os_guess, services = parse_scan_xml(two_port_xml)
        cves, _ = enrich_with_cves(services, offline_nvd)
        rendered = render_services_context(target, os_guess, services, cves)
        assert rendered.count("CVE-2021-23017") == 1


class TestDiscoverAndRunScan:
    def test_fixture_discover_composition(self, fixtures_dir, offline_nvd, target):
        config = ScanConfig(fixture_xml=fixtures_dir / "scan_two_ports.xml")
        report = discover(target, config, offline_nvd)
        assert {s.port for s in report.services} == {22, 80}
        assert [c.id for c in report.cves] == ["CVE-2021-23017"]
        # discover() is the pure composition of parse + enrich + render
        expected = render_services_context(
            target, report.os_guess, report.services, report.cves
        )
        assert report.rendered_context == expected

    def test_zero_open_ports_yields_empty_report(self, fixtures_dir, offline_nvd, target):
        config = ScanConfig(fixture_xml=fixtures_dir / "scan_no_ports.xml")
        report = discover(target, config, offline_nvd)
        assert report.services == () and report.cves == ()
        assert report.rendered_context == "No open ports detected."

    def test_scanner_missing(self, target):
        config = ScanConfig(executable="/nonexistent/nmap-binary")
        with pytest.raises(ScannerMissing):
            run_scan(target, config)

    def test_fake_scanner_executable(self, tmp_path, fixtures_dir, target, offline_nvd):
        # a stand-in scanner that emits the fixture XML on stdout
        script = tmp_path / "fake-nmap"
        xml_path = fixtures_dir / "scan_two_ports.xml"
        script.write_text(f"#!/bin/sh\ncat {xml_path}\n")
        script.chmod(0o755)
        config = ScanConfig(executable=str(script), os_detection=False)
        invocation = run_scan(target, config)
        assert invocation.exit_status == 0
        _, services = parse_scan_xml(invocation.raw_xml)
        assert {s.port for s in services} == {22, 80}

    def test_argv_shape(self):
        config = ScanConfig(executable="nmap", os_detection=False)
        argv = config.argv("10.0.0.1")
        assert argv[0] == "nmap"
        assert "-sV" in argv and "-oX" in argv and argv[-1] == "10.0.0.1"
        assert "-p" in argv and argv[argv.index("-p") + 1] == "-"
