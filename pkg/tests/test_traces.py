from __future__ import annotations

import numpy as np
import pytest

from qset.errors import TraceParseError
from qset.traces import CurrentTrace, n_samples, read_trace, write_trace


def test_trace_time_axis_and_derived_properties():
    trace = CurrentTrace(2.0, 0.5, np.array([1e-12, 2e-12, 3e-12]))
    assert np.array_equal(trace.times(), np.array([2.0, 2.5, 3.0]))
    assert trace.duration == 1.0
    assert trace.n == 3
    assert trace.sample_rate == 2.0


def test_sample_count_arithmetic():
    assert n_samples(43200.0, 0.1) == 432001
    assert n_samples(1.0, 0.5) == 3
    assert n_samples(50.0, 0.1) == 501


def test_trace_validates_inputs():
    with pytest.raises(ValueError):
        CurrentTrace(0.0, -0.1, np.array([1e-12, 2e-12]))
    with pytest.raises(ValueError):
        CurrentTrace(0.0, 0.1, np.array([1e-12, np.nan]))
    with pytest.raises(ValueError):
        CurrentTrace(0.0, 0.1, np.array([1e-12, np.inf]))
    with pytest.raises(ValueError):
        CurrentTrace(0.0, 0.1, np.array([1e-12, 2e-12]),
                     annotations={"state": np.array([0])})


def test_annotation_lookup():
    trace = CurrentTrace(0.0, 0.1, np.array([1e-12, 2e-12]),
                         annotations={"state": np.array([0, 1])})
    assert np.array_equal(trace.annotation("state"), np.array([0, 1]))
    with pytest.raises(KeyError):
        trace.annotation("missing")


def test_round_trip_preserves_samples_and_annotations(tmp_path):
    trace = CurrentTrace(
        0.0, 0.125,
        np.array([1.3e-12, 2.7e-12, 3.1e-12, 2.9e-12]),
        annotations={
            "state": np.array([0, 1, 1, 0], dtype=np.int8),
            "component_white": np.array([1.1e-14, -2.2e-14, 0.0, 3.3e-14]),
        })
    path = tmp_path / "trace.csv"
    write_trace(trace, path)
    back = read_trace(path)
    assert back.t0 == trace.t0
    assert back.dt == trace.dt
    assert np.array_equal(back.samples, trace.samples)
    assert back.annotations["state"].dtype.kind in "iu"
    assert np.array_equal(back.annotations["state"], trace.annotations["state"])
    assert np.array_equal(back.annotations["component_white"],
                          trace.annotations["component_white"])


def write_and_parse(tmp_path, content: str):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    return read_trace(path)


@pytest.mark.parametrize("content,line,fragment", [
    ("", 1, "empty"),
    ("foo,bar\n", 1, "header"),
    ("time_s,current_A\n", 1, "two samples"),
    ("time_s,current_A\n0.0,1e-12\n", 2, "two samples"),
    ("time_s,current_A\n0.0,1e-12\n0.1\n", 3, "columns"),
    ("time_s,current_A\n0.0,1e-12\n0.1,abc\n", 3, "parse"),
    ("time_s,current_A\n0.0,1e-12\n0.1,nan\n0.2,1e-12\n", 3, "non-finite"),
    ("time_s,current_A\n0.0,1e-12\n0.2,1e-12\n0.1,1e-12\n", 4, "increasing"),
    ("time_s,current_A\n0.0,1e-12\n0.1,1e-12\n0.3,1e-12\n", 3, "non-uniform"),
])
def test_parse_errors_carry_line_numbers(tmp_path, content, line, fragment):
    with pytest.raises(TraceParseError) as excinfo:
        write_and_parse(tmp_path, content)
    assert excinfo.value.line == line
    assert fragment in str(excinfo.value)


def test_missing_file_raises_os_error(tmp_path):
    with pytest.raises(OSError):
        read_trace(tmp_path / "absent.csv")


def test_small_timing_jitter_is_tolerated(tmp_path):
    # jitter far below the relative spacing tolerance must parse cleanly
    rows = ["time_s,current_A"]
    for k in range(5):
        t = 0.1 * k + (1e-9 if k == 2 else 0.0)
        rows.append(f"{t!r},1e-12")
    path = tmp_path / "jitter.csv"
    path.write_text("\n".join(rows) + "\n")
    trace = read_trace(path)
    assert trace.n == 5
    assert trace.dt == pytest.approx(0.1, rel=1e-7)
