#!/usr/bin/env python3
"""Test descriptor records and positional payload parsing."""

import random
from datetime import timezone

import pytest

from core.errors import ArityMismatch, MalformedContent
from core.payload import (
    DescriptorRecord,
    ParameterSpec,
    VersionEntry,
    format_positional_payload,
    parse_positional_payload,
    parse_positional_values,
    parse_utc_offset,
)

WATER_FLOW = DescriptorRecord(
    node_id="WM-WF-PH01-00",
    location=(17.445793, 78.351444),
    device_model={"Controller": "ESP 32, id=1.0"},
    versions=[VersionEntry("V6.0.0", "26-04-2021 00-00-00", "31-12-9999 23-59-59")],
    parameters=["Timestamp", "Flowrate", "Total Flow", "Pressure", "Pressure Voltage"],
    descriptions={
        "Flowrate": ParameterSpec(name="Flowrate", units="m³/h", resolution="0.001"),
        "Pressure Voltage": ParameterSpec(name="Pressure Voltage", units="V"),
    },
)


def test_water_flow_payload():
    print("\n" + "="*60)
    print("PAYLOAD TEST - WATER FLOW")
    print("="*60)

    values = parse_positional_payload(WATER_FLOW, "[1645254204, 867.00, 3091168.00, 260.00, 0.006418]")
    print(f"  Parsed: {values}")
    assert values == {
        "Timestamp": 1645254204,
        "Flowrate": 867.00,
        "Total Flow": 3091168.00,
        "Pressure": 260.00,
        "Pressure Voltage": 0.006418,
    }
    assert isinstance(values["Timestamp"], int)
    print("  ✓ positional values bound to descriptor parameter names")


def test_nan_and_single_value():
    aq = parse_positional_values("[1646491691, 23.50, 42.80, 31.49, 32.25, nan, nan, nan, 42.80, 0, 1, 0]")
    assert aq[5:8] == [None, None, None]
    assert aq[-3:] == [0, 1, 0]

    single = DescriptorRecord("X", (0.0, 0.0), {}, [], ["Timestamp"])
    assert parse_positional_payload(single, "[0]") == {"Timestamp": 0}
    print("  ✓ nan maps to None; singleton payload parses")


def test_malformed_and_arity():
    with pytest.raises(ArityMismatch):
        parse_positional_payload(WATER_FLOW, "[1, 2, 3]")
    for bad in ("1, 2, 3", "[1, abc]", "{\"a\": 1}", None):
        with pytest.raises(MalformedContent):
            parse_positional_values(bad)
    print("  ✓ arity and format errors raised")


def test_format_is_inverse_of_parse():
    rng = random.Random(11)
    for _ in range(200):
        values = [rng.randint(0, 2_000_000_000)]
        for _ in range(rng.randint(0, 8)):
            roll = rng.random()
            if roll < 0.15:
                values.append(None)
            elif roll < 0.4:
                values.append(rng.randint(-50, 50))
            else:
                values.append(round(rng.uniform(-1000, 1000), rng.randint(0, 6)))
        assert parse_positional_values(format_positional_payload(values)) == values
    print("  ✓ parse(format(v)) == v over 200 random payloads")


def test_quoted_values_keep_commas_and_quotes():
    assert parse_positional_values('[1, "a,b", 3]') == [1, "a,b", 3]
    assert parse_positional_values("[1, 'x, y']") == [1, "x, y"]

    values = [1645254204, "Block A, Room 3", 2.5, None, 'say "hi", then go']
    assert parse_positional_values(format_positional_payload(values)) == values

    for bad in ('[1, "abc]', '[1, "a" b]'):
        with pytest.raises(MalformedContent):
            parse_positional_values(bad)
    print("  ✓ quoted values may hold commas and escaped quotes")


def test_descriptor_json_round_trip_and_versions():
    text = WATER_FLOW.to_json()
    restored = DescriptorRecord.from_json(text)
    assert restored.parameters == WATER_FLOW.parameters
    assert restored.location == (17.445793, 78.351444)
    assert restored.spec("Flowrate").units == "m³/h"
    assert restored.versions[0].is_open()

    ist = parse_utc_offset("+05:30")
    assert restored.version_at(1645254204, ist).ver == "V6.0.0"
    assert restored.version_at(1600000000, ist) is None
    assert parse_utc_offset("+00:00") == timezone.utc

    with pytest.raises(MalformedContent):
        DescriptorRecord.from_json("not a descriptor")
    print("  ✓ descriptor JSON round trip; open-ended version covers recent data")


if __name__ == "__main__":
    test_water_flow_payload()
    test_nan_and_single_value()
    test_malformed_and_arity()
    test_format_is_inverse_of_parse()
    test_quoted_values_keep_commas_and_quotes()
    test_descriptor_json_round_trip_and_versions()

    print("\n" + "="*60)
    print("ALL PAYLOAD TESTS PASSED ✓")
    print("="*60)
