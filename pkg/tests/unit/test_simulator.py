#!/usr/bin/env python3
"""Test the fault-injecting simulator and its ground-truth tally."""

from datetime import datetime, timezone
from pathlib import Path

import pytest

from core.campus import Campus, seed_tree
from core.payload import parse_positional_payload
from core.tree import ResourceTree
from ingest.platform_client import LocalTransport, PlatformClient
from ingest.simulator import (
    FaultPlan,
    SimProfile,
    Simulator,
    ground_truth_tally,
    load_profiles,
    post_stream,
    read_ground_truth,
    write_ground_truth,
)
from monitor.api import MonitorApi
from utils.clock import ManualClock
from utils.settings import ConfigError

ROOT = Path(__file__).resolve().parents[2]
CAMPUS = Campus.load(ROOT / "config" / "campus.yaml")
PROFILES = load_profiles(ROOT / "config" / "profiles.yaml")
AQ_MODEL = CAMPUS.models["aq"]
DAY = 86400


def clean(profile: SimProfile, **faults) -> SimProfile:
    return SimProfile(profile.name, profile.node_id, profile.period, profile.generators, FaultPlan(**faults), profile.start)


def test_clean_day_has_one_record_per_slot():
    print("\n" + "="*60)
    print("SIMULATOR TEST - CLEAN DAY")
    print("="*60)

    profile = clean(PROFILES["aq"])
    records = Simulator(profile, AQ_MODEL, seed=7).run(DAY)
    assert len(records) == 5760, f"24 h at 15 s is 5760 slots, got {len(records)}"
    assert all(r.copy == 1 for r in records)
    assert all(b.t_new - a.t_new == 15 for a, b in zip(records, records[1:]))
    assert records[0].t_new == int(datetime.fromisoformat("2022-01-12T00:00:00+05:30").timestamp())
    assert records[0].values[0] == records[0].t_new, "Timestamp leads the positional values"
    assert len(records[0].values) == len(AQ_MODEL.names)

    tally = ground_truth_tally(records, profile.period)
    assert tally["fed"] == tally["unique"] == 5760
    assert tally["duplicate_distribution"] == {1: 5760}
    assert set(tally["time_delays"]) == {0}
    assert tally["out_of_range"] == {}
    print("  ✓ 5760 single-copy records, no delays, nothing out of range")


def test_same_seed_same_stream():
    a = Simulator(PROFILES["aq"], AQ_MODEL, seed=42).run(3600)
    b = Simulator(PROFILES["aq"], AQ_MODEL, seed=42).run(3600)
    c = Simulator(PROFILES["aq"], AQ_MODEL, seed=43).run(3600)
    assert a == b
    assert a != c
    print("  ✓ seeded runs are reproducible")


def test_forced_duplicates_and_drops():
    profile = clean(PROFILES["aq"], duplicate_prob=1.0, max_repeats=2)
    records = Simulator(profile, AQ_MODEL).run(600)
    assert len(records) == 80
    assert ground_truth_tally(records, 15)["duplicate_distribution"] == {2: 40}
    assert all(b.t_rec >= a.t_rec for a, b in zip(records, records[1:])), "recorded time never goes backwards"
    assert all(r.values == records[2 * (r.slot)].values for r in records)

    dropped = Simulator(clean(PROFILES["aq"], drop_prob=1.0), AQ_MODEL).run(600)
    assert dropped == []
    print("  ✓ retransmissions repeat the same values; drops emit nothing")


def test_exact_repeat_counts():
    profile = PROFILES["aq-day-observed"]
    records = Simulator(profile, AQ_MODEL, seed=42).run(DAY)
    tally = ground_truth_tally(records, profile.period)

    assert tally["duplicate_distribution"] == {1: 1747, 2: 1196, 3: 283, 4: 247}
    assert tally["unique"] == 1747 + 1196 + 283 + 247
    assert tally["fed"] == 1747 + 2 * 1196 + 3 * 283 + 4 * 247
    assert tally["unique"] + sum((n - 1) * k for n, k in tally["duplicate_distribution"].items()) == tally["fed"]
    assert all(d >= 0 for d in tally["transmission_delays"])
    assert max(tally["time_delays"]) > 0, "dropped slots show up as gaps"

    with pytest.raises(ConfigError):
        Simulator(profile, AQ_MODEL, seed=42).run(3600)
    print("  ✓ exact plan reproduces the configured repeat counts")


def test_outliers_and_nulls_hit_fault_parameters():
    profile = clean(PROFILES["aq"], outlier_prob=1.0, parameters=["Temperature"])
    records = Simulator(profile, AQ_MODEL).run(300)
    index = AQ_MODEL.names.index("Temperature")
    assert all(r.outliers == ("Temperature",) for r in records)
    assert all(r.values[index] < 0 for r in records)
    tally = ground_truth_tally(records, 15, AQ_MODEL)
    assert tally["out_of_range"] == {"airTemperature": 20}

    nulls = Simulator(clean(PROFILES["aq"], null_prob=1.0, parameters=["PM10"]), AQ_MODEL).run(150)
    assert all(r.values[AQ_MODEL.names.index("PM10")] is None for r in nulls)
    assert "nan" in nulls[0].con()
    print("  ✓ faults land only on the configured parameters")


def test_profile_validation():
    with pytest.raises(ConfigError):
        SimProfile("bad", "AQ-KH00-00", 0, {})
    with pytest.raises(ConfigError):
        FaultPlan.from_dict({"duplicate_probability": 0.1})
    with pytest.raises(ConfigError):
        Simulator(SimProfile("bad", "AQ-KH00-00", 15, {"Wind Speed": {"mean": 1}}), AQ_MODEL)
    print("  ✓ bad profiles raise ConfigError")


def test_ground_truth_file_and_posting(tmp_path):
    profile = PROFILES["aq"]
    records = Simulator(profile, AQ_MODEL, seed=3).run(300)
    path = write_ground_truth(records, tmp_path / "truth.jsonl")
    assert read_ground_truth(path) == records

    clock = ManualClock()
    tree = ResourceTree(clock=clock)
    seed_tree(tree, CAMPUS)
    client = PlatformClient(LocalTransport(MonitorApi(tree)), "admin:admin")
    node = CAMPUS.find(profile.node_id)
    assert post_stream(records, client, node, tree.root.path, clock) == len(records)

    data = tree.resolve(node.data_path(tree.root.path))
    assert data.cni == len(records)
    latest = tree.latest(data, "admin:admin")
    assert latest.lbl == ["AE-AQ", "AQ-KH00-00", "V3.0.02", "AQ-V3.0.02"]
    assert latest.ct == datetime.fromtimestamp(records[-1].t_rec, timezone.utc).strftime("%Y%m%dT%H%M%S")
    values = parse_positional_payload(node.descriptor(), latest.con)
    assert values["Timestamp"] == records[-1].t_new
    print("  ✓ records post as content instances stamped with their recorded time")


if __name__ == "__main__":
    import tempfile

    test_clean_day_has_one_record_per_slot()
    test_same_seed_same_stream()
    test_forced_duplicates_and_drops()
    test_exact_repeat_counts()
    test_outliers_and_nulls_hit_fault_parameters()
    test_profile_validation()
    with tempfile.TemporaryDirectory() as tmp:
        test_ground_truth_file_and_posting(Path(tmp))

    print("\n" + "="*60)
    print("ALL SIMULATOR TESTS PASSED ✓")
    print("="*60)
