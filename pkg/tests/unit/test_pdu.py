#!/usr/bin/env python3
"""Test the energy-meter PDU codec."""

from decimal import Decimal

import pytest

from ingest.errors import FieldOverflow, NonHexDigit, TooShort
from ingest.pdu import PDU_HEX_LENGTH, PDU_LAYOUT, EnergyReading, decode_pdu, encode_pdu, split_pdu

SAMPLE = "0000048000000479000004675ACD5B5C5B69004C13870000031E0000025E00033701000231470000021C00042B53"

EXPECTED = {
    "r_current": Decimal("1.152"),
    "y_current": Decimal("1.145"),
    "b_current": Decimal("1.127"),
    "r_voltage": Decimal("232.45"),
    "y_voltage": Decimal("233.88"),
    "b_voltage": Decimal("234.01"),
    "avg_pf": Decimal("0.76"),
    "avg_freq": Decimal("49.99"),
    "power_kva": Decimal("0.798"),
    "power_kw": Decimal("0.606"),
    "energy_kwh": Decimal("2106.89"),
    "kvrh_lead": Decimal("1436.87"),
    "kvrh_lag": Decimal("5.4"),
    "energy_kvah": Decimal("2732.35"),
}


def test_decode_sample_payload():
    print("\n" + "="*60)
    print("PDU TEST - DECODE")
    print("="*60)

    reading = decode_pdu(SAMPLE)
    for name, value in EXPECTED.items():
        got = getattr(reading, name)
        print(f"  {name:<12} {got}")
        assert got == value, f"{name}: expected {value}, got {got}"
    print("  ✓ all fourteen fields decode to their scaled values")


def test_layout_and_zero_payload():
    assert PDU_HEX_LENGTH == 92
    assert len(PDU_LAYOUT) == 14
    zero = decode_pdu("0" * PDU_HEX_LENGTH)
    assert all(v == 0 for v in zero.as_dict().values())
    assert encode_pdu(EnergyReading()) == "0" * PDU_HEX_LENGTH
    print("  ✓ 92 hex characters; all-zero payload decodes to zeros")


def test_encode_reproduces_sample():
    assert encode_pdu(EnergyReading(**EXPECTED)) == SAMPLE
    assert decode_pdu(SAMPLE.lower()).r_voltage == Decimal("232.45")
    assert decode_pdu("0x" + SAMPLE + "FFFF") == decode_pdu(SAMPLE), "trailing characters are ignored"
    assert decode_pdu(" ".join(hex for _, hex in split_pdu(SAMPLE))) == decode_pdu(SAMPLE)
    print("  ✓ encoder inverts decoder; 0x prefix, whitespace and lower case accepted")


def test_malformed_payloads():
    with pytest.raises(TooShort):
        decode_pdu(SAMPLE[:84])
    with pytest.raises(NonHexDigit):
        decode_pdu(SAMPLE[:-1] + "G")
    with pytest.raises(NonHexDigit):
        decode_pdu("XYZ")
    with pytest.raises(FieldOverflow):
        encode_pdu(EnergyReading(r_voltage=Decimal("700")))
    with pytest.raises(FieldOverflow):
        encode_pdu(EnergyReading(r_current=Decimal("-1")))
    print("  ✓ short, non-hex and overflowing payloads are rejected")


def test_parameters_use_descriptor_names():
    params = decode_pdu(SAMPLE).as_parameters()
    assert params["R Voltage"] == 232.45
    assert params["kWh"] == 2106.89
    assert list(params)[0] == "R Current"

    bigger = EXPECTED.copy()
    bigger["energy_kwh"] = Decimal("2106.90")
    assert int(encode_pdu(EnergyReading(**bigger))[60:68], 16) > int(SAMPLE[60:68], 16)
    print("  ✓ parameter view keyed by descriptor names; encoding is monotone")


if __name__ == "__main__":
    test_decode_sample_payload()
    test_layout_and_zero_payload()
    test_encode_reproduces_sample()
    test_malformed_payloads()
    test_parameters_use_descriptor_names()

    print("\n" + "="*60)
    print("ALL PDU TESTS PASSED ✓")
    print("="*60)
