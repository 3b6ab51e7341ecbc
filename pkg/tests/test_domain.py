from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, strategies as st

from autopentest.domain import (
    LEGAL_PHASE_TRANSITIONS,
    AlreadyResolved,
    ApprovalRequest,
    ApprovalState,
    CveRecord,
    IllegalPhaseTransition,
    InvalidTarget,
    Observation,
    Plan,
    RunConfig,
    RunPhase,
    RunState,
    ServiceRecord,
    Target,
    TokenUsage,
    UsageLedger,
    WorkerName,
    dollars_to_micro,
    format_usd,
    validate_target,
)


class TestValidateTarget:
    def test_well_formed_ipv4(self):
        assert validate_target("10.10.11.239").host == "10.10.11.239"

    def test_hostname(self):
        assert validate_target("devvortex.htb").host == "devvortex.htb"

    def test_empty_rejected(self):
        with pytest.raises(InvalidTarget):
            validate_target("")

    def test_hostname_lowercased(self):
        assert validate_target("DevVortex.HTB").host == "devvortex.htb"

    def test_ipv6_canonicalized(self):
        assert validate_target("2001:0db8:0000:0000:0000:0000:0000:0001").host == "2001:db8::1"

    @pytest.mark.parametrize("raw", ["-bad.example", "bad-.example", "a b", "x" * 300, "..."])
    def test_garbage_rejected(self, raw):
        with pytest.raises(InvalidTarget):
            validate_target(raw)


class TestCurrency:
    def test_dollars_to_micro_exact(self):
        assert dollars_to_micro("0.005") == 5_000
        assert dollars_to_micro("0.015") == 15_000

    def test_format_rounds_half_up_at_cents(self):
        assert format_usd(2_385_000) == "$2.39"
        assert format_usd(0) == "$0.00"
        assert format_usd(96_200_000) == "$96.20"


class TestDomainInvariants:
    def test_service_record_validates_port_and_cpes(self):
        with pytest.raises(ValueError):
            ServiceRecord(port=0, transport="tcp", service_name="x")
        with pytest.raises(ValueError):
            ServiceRecord(port=80, transport="tcp", service_name="http", cpes=("cpe:/a:x:y",))

    def test_cve_record_id_pattern(self):
        CveRecord(id="CVE-2021-44228", description="d")
        with pytest.raises(ValueError):
            CveRecord(id="CVE-1-1", description="d")

    def test_plan_steps_non_empty(self):
        with pytest.raises(ValueError):
            Plan(steps=("ok", "  "))

    def test_observation_summary_non_empty(self):
        with pytest.raises(ValueError):
            Observation(step="s", worker=WorkerName.ENUMERATION, summary="  ")

    def test_worker_name_closed_set(self):
        assert len(WorkerName) == 8
        assert {w.value for w in WorkerName} == {
            "Enumeration",
            "BrokenAccessControl",
            "CryptographicFailures",
            "Injection",
            "InsecureDesign",
            "SecurityConfiguration",
            "IdentificationAndAuthenticationFailures",
            "PrivilegeEscalation",
        }

    def test_run_config_bounds(self):
        target = Target(host="h")
        with pytest.raises(ValueError):
            RunConfig(target=target, temperature=2.5)
        with pytest.raises(ValueError):
            RunConfig(target=target, max_worker_iterations=0)
        with pytest.raises(ValueError):
            RunConfig(target=target, session_budget=0)


class TestTranscriptMonotonicity:
    def test_non_decreasing_accepted(self):
        from autopentest.domain import TranscriptMessage, check_transcript_monotone

        messages = [
            TranscriptMessage(role="system", content="a", timestamp=1.0),
            TranscriptMessage(role="user", content="b", timestamp=1.0),
            TranscriptMessage(role="agent", content="c", timestamp=2.5),
        ]
        assert check_transcript_monotone(messages) is True

    def test_regression_detected(self):
        from autopentest.domain import TranscriptMessage, check_transcript_monotone

        messages = [
            TranscriptMessage(role="user", content="b", timestamp=2.0),
            TranscriptMessage(role="agent", content="c", timestamp=1.0),
        ]
        assert check_transcript_monotone(messages) is False


class TestApprovalRequest:
    def test_single_resolution(self):
        request = ApprovalRequest(id="a", command="c", tool="t", worker=WorkerName.INJECTION)
        request.resolve(True)
        assert request.state is ApprovalState.APPROVED
        with pytest.raises(AlreadyResolved):
            request.resolve(False)


class TestRunStateMachine:
    def _fresh(self) -> RunState:
        return RunState(RunConfig(target=Target(host="h")))

    def test_exhaustive_transition_matrix(self):
        phases = list(RunPhase)
        for source, destination in itertools.product(phases, phases):
            state = self._fresh()
            state.phase = source
            final = "done" if destination is RunPhase.FINISHED else None
            if (source, destination) in LEGAL_PHASE_TRANSITIONS:
                state.advance(destination, final_response=final)
                assert state.phase is destination
            else:
                with pytest.raises(IllegalPhaseTransition):
                    state.advance(destination, final_response=final)

    def test_final_response_iff_finished(self):
        state = self._fresh()
        with pytest.raises(ValueError):
            state.advance(RunPhase.PLANNING, final_response="early")
        state.advance(RunPhase.PLANNING)
        assert state.final_response is None

    def test_observations_append_only_prefix_property(self):
        state = self._fresh()
        serialized: list[list[dict]] = []
        for index in range(5):
            state.record_observation(
                Observation(step=f"s{index}", worker=WorkerName.ENUMERATION, summary=f"o{index}")
            )
            serialized.append(json.loads(state.snapshot_json())["past_steps"])
        for earlier, later in zip(serialized, serialized[1:]):
            assert later[: len(earlier)] == earlier


class TestUsageLedger:
    @given(
        st.lists(
            st.tuples(st.integers(0, 10**7), st.integers(0, 10**6)),
            max_size=50,
        )
    )
    def test_total_equals_sum_of_entries(self, pairs):
        ledger = UsageLedger()
        for input_tokens, output_tokens in pairs:
            ledger.record_completion(TokenUsage(input_tokens, output_tokens))
        total = ledger.completion_total
        assert total.input_tokens == sum(p[0] for p in pairs)
        assert total.output_tokens == sum(p[1] for p in pairs)
        entries = ledger.completion_entries
        assert total.input_tokens == sum(e.input_tokens for e in entries)

    def test_embedding_usage_tracked_separately(self):
        ledger = UsageLedger()
        ledger.record_completion(TokenUsage(10, 2))
        ledger.record_embedding(TokenUsage(7, 0))
        assert ledger.completion_total == TokenUsage(10, 2)
        assert ledger.embedding_total == TokenUsage(7, 0)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            TokenUsage(-1, 0)
