"""The verification battery must pass on the healthy build and fail
when the radial stencil is deliberately corrupted."""

import json

from plaquefb.battery import (DEFAULT_PARAMS, all_passed, battery_to_json,
                              run_battery)


def test_battery_fast_scale_passes():
    reports = run_battery(DEFAULT_PARAMS, scale="fast")
    failed = [r.name for r in reports if not r.passed]
    assert all_passed(reports), f"battery failures: {failed}"


def test_battery_catches_corrupted_stencil():
    reports = run_battery(DEFAULT_PARAMS, scale="fast", corrupt_stencil=True)
    assert not all_passed(reports)
    failed = {r.name for r in reports if not r.passed}
    assert "field-convergence" in failed


def test_battery_json_roundtrip(tmp_path):
    reports = run_battery(DEFAULT_PARAMS, scale="fast")
    path = tmp_path / "battery.json"
    battery_to_json(reports, path)
    data = json.loads(path.read_text())
    assert len(data) == len(reports)
    assert all({"name", "passed"} <= set(entry) for entry in data)
