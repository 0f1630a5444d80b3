#!/usr/bin/env python3
"""Test RSSI classification."""

from ingest.radio import RssiClass, classify_rssi, rssi_summary


def test_classify_boundaries():
    print("\n" + "="*60)
    print("RSSI TEST - CLASSIFY")
    print("="*60)

    assert classify_rssi(-90) is RssiClass.IDEAL
    assert classify_rssi(-125) is RssiClass.BELOW_IDEAL
    assert classify_rssi(-120) is RssiClass.IDEAL
    assert classify_rssi(-30) is RssiClass.IDEAL
    assert classify_rssi(-29.5) is RssiClass.ABOVE_IDEAL
    assert classify_rssi(-120.01) is RssiClass.BELOW_IDEAL
    print("  ✓ [-120, -30] dBm is ideal, ends included")


def test_summary():
    summary = rssi_summary([-90, -125, -30, -120, -10, None])
    assert summary["total"] == 5
    assert summary["counts"] == {"Ideal": 3, "BelowIdeal": 1, "AboveIdeal": 1}
    assert summary["ideal_share"] == 0.6
    assert rssi_summary([])["ideal_share"] == 0.0
    print("  ✓ summary counts classes and skips missing readings")


if __name__ == "__main__":
    test_classify_boundaries()
    test_summary()

    print("\n" + "="*60)
    print("ALL RSSI TESTS PASSED ✓")
    print("="*60)
