"""Event schema, trace invariants, and the JSONL trace format."""

from __future__ import annotations

import dataclasses

import pytest

from hpc_sentinel.errors import DecodeError
from hpc_sentinel.events import (
    EventKind,
    CounterSample,
    Load,
    ProcessCategory,
    Trace,
    make_event_set,
    read_trace,
    trace_from_jsonl,
    trace_to_jsonl,
    validate_trace,
    write_trace,
)
from hpc_sentinel.simgen import SimConfig, generate_trace

from conftest import make_toy_trace


class TestEventSet:
    def test_spectre_events(self):
        assert make_event_set("spectre").ids == ("L3_TCM", "L3_TCA", "BR_INS", "BR_MSP", "TOT_INS")

    def test_meltdown_events(self):
        assert make_event_set("meltdown").ids == ("L3_TCM", "L3_TCA", "PAGE_FAULTS", "TOT_INS")

    def test_lengths(self):
        assert len(make_event_set("spectre")) == 5
        assert len(make_event_set("meltdown")) == 4

    def test_deterministic_order(self):
        assert make_event_set("spectre") == make_event_set("spectre")
        assert make_event_set("meltdown").events == make_event_set("meltdown").events

    def test_page_faults_is_software_rest_hardware(self):
        for es in (make_event_set("spectre"), make_event_set("meltdown")):
            for ev in es.events:
                expected = EventKind.SOFTWARE if ev.id == "PAGE_FAULTS" else EventKind.HARDWARE
                assert ev.kind is expected
                assert ev.scope == "per-process"

    def test_unknown_profile_rejected(self):
        with pytest.raises(ValueError):
            make_event_set("rowhammer")


class TestValidateTrace:
    def test_well_formed_trace_empty_report(self):
        assert validate_trace(make_toy_trace()) == []

    def test_decreasing_counter_names_pid_and_event(self):
        trace = make_toy_trace()
        samples = list(trace.samples)
        bad = samples[2]  # pid 1 at t=100
        values = list(bad.values)
        values[3] = 0  # below the t=0 cumulative value
        samples[2] = dataclasses.replace(bad, values=tuple(values))
        report = validate_trace(dataclasses.replace(trace, samples=tuple(samples)))
        assert len(report) == 1
        v = report[0]
        assert v.code == "decreasing_counter"
        assert v.pid == 1
        assert v.field == "BR_MSP"

    def test_unknown_pid_reported(self):
        trace = make_toy_trace()
        extra = CounterSample(pid=99, t=200, values=trace.samples[-1].values)
        report = validate_trace(dataclasses.replace(trace, samples=trace.samples + (extra,)))
        assert [v.code for v in report] == ["unknown_pid"]
        assert report[0].pid == 99

    def test_bad_spacing_reported(self):
        trace = make_toy_trace()
        samples = list(trace.samples)
        samples[-1] = dataclasses.replace(samples[-1], t=250)
        report = validate_trace(dataclasses.replace(trace, samples=tuple(samples)))
        assert "bad_window_spacing" in [v.code for v in report]

    def test_wrong_value_count_reported(self):
        trace = make_toy_trace()
        samples = list(trace.samples)
        samples[0] = dataclasses.replace(samples[0], values=samples[0].values[:3])
        report = validate_trace(dataclasses.replace(trace, samples=tuple(samples)))
        assert "bad_value_count" in [v.code for v in report]

    @pytest.mark.parametrize("profile", ["spectre", "meltdown"])
    @pytest.mark.parametrize("load", [Load.NL, Load.AL, Load.FL])
    def test_generated_traces_are_valid(self, profile, load):
        trace = generate_trace(SimConfig(profile=profile, load=load, duration_windows=60, seed=5))
        assert validate_trace(trace) == []


class TestJsonlFormat:
    def test_round_trip_identity_toy(self):
        trace = make_toy_trace()
        assert trace_from_jsonl(trace_to_jsonl(trace)) == trace

    @pytest.mark.parametrize("profile,seed", [("spectre", 0), ("spectre", 7), ("meltdown", 3)])
    def test_round_trip_identity_generated(self, profile, seed):
        trace = generate_trace(SimConfig(profile=profile, duration_windows=40, seed=seed))
        assert trace_from_jsonl(trace_to_jsonl(trace)) == trace

    def test_file_round_trip(self, tmp_path):
        trace = make_toy_trace()
        path = tmp_path / "t.jsonl"
        write_trace(trace, path)
        assert read_trace(path) == trace

    def test_header_fields(self):
        import json

        header = json.loads(trace_to_jsonl(make_toy_trace()).splitlines()[0])
        assert header == {
            "schema_version": 1,
            "profile": "spectre",
            "load": "NL",
            "window_ms": 100,
            "events": ["L3_TCM", "L3_TCA", "BR_INS", "BR_MSP", "TOT_INS"],
            "processes": {"1": "benign", "2": "spectre_v1"},
        }

    def test_unknown_header_field_rejected(self):
        import json

        lines = trace_to_jsonl(make_toy_trace()).splitlines()
        header = json.loads(lines[0])
        header["comment"] = "hello"
        with pytest.raises(DecodeError, match="comment"):
            trace_from_jsonl("\n".join([json.dumps(header)] + lines[1:]))

    def test_unknown_sample_field_rejected(self):
        import json

        lines = trace_to_jsonl(make_toy_trace()).splitlines()
        row = json.loads(lines[1])
        row["label"] = "benign"
        with pytest.raises(DecodeError):
            trace_from_jsonl("\n".join([lines[0], json.dumps(row)] + lines[2:]))

    def test_wrong_event_list_rejected(self):
        import json

        lines = trace_to_jsonl(make_toy_trace()).splitlines()
        header = json.loads(lines[0])
        header["events"] = header["events"][::-1]
        with pytest.raises(DecodeError, match="profile"):
            trace_from_jsonl("\n".join([json.dumps(header)] + lines[1:]))

    def test_truncated_document_rejected(self):
        text = trace_to_jsonl(make_toy_trace())
        with pytest.raises(DecodeError):
            trace_from_jsonl(text[: len(text) // 2])

    def test_empty_document_rejected(self):
        with pytest.raises(DecodeError):
            trace_from_jsonl("")


class TestProcessCategory:
    def test_malicious_iff_not_benign(self):
        assert not ProcessCategory.BENIGN.malicious
        for cat in (ProcessCategory.SPECTRE_V1, ProcessCategory.SPECTRE_V2, ProcessCategory.MELTDOWN):
            assert cat.malicious
