"""
Energy-meter PDU codec.

The LoRaWAN uplink carries fourteen electrical parameters as fixed-width,
unsigned big-endian hex fields. Each field is scaled by a divisor (1000 for
currents and power, 100 for the rest), so decoding is int(slice, 16) / divisor.
Values are Decimals: 0x5ACD / 100 is exactly 232.45.

Field widths add up to 92 hex characters (46 bytes); anything after that is
ignored on decode.
"""
import re
from dataclasses import dataclass, fields
from decimal import ROUND_HALF_UP, Decimal
from enum import IntEnum
from typing import Any, Dict, List, Mapping, Tuple

from ingest.errors import FieldOverflow, NonHexDigit, TooShort


class Scaling(IntEnum):
    CENTI = 100
    MILLI = 1000


@dataclass(frozen=True)
class PduField:
    name: str
    width: int
    scaling: Scaling
    parameter: str

    def decode(self, chunk: str) -> Decimal:
        return Decimal(int(chunk, 16)) / Decimal(int(self.scaling))

    def encode(self, value: Any) -> str:
        scaled = (Decimal(str(value)) * int(self.scaling)).quantize(Decimal(1), rounding=ROUND_HALF_UP)
        if scaled < 0 or scaled >= 16 ** self.width:
            raise FieldOverflow(f"{self.name}={value} does not fit {self.width} hex digits")
        return f"{int(scaled):0{self.width}X}"


# order, width and divisor of every field in the payload
PDU_LAYOUT: Tuple[PduField, ...] = (
    PduField("r_current", 8, Scaling.MILLI, "R Current"),
    PduField("y_current", 8, Scaling.MILLI, "Y Current"),
    PduField("b_current", 8, Scaling.MILLI, "B Current"),
    PduField("r_voltage", 4, Scaling.CENTI, "R Voltage"),
    PduField("y_voltage", 4, Scaling.CENTI, "Y Voltage"),
    PduField("b_voltage", 4, Scaling.CENTI, "B Voltage"),
    PduField("avg_pf", 4, Scaling.CENTI, "Avg PF"),
    PduField("avg_freq", 4, Scaling.CENTI, "Avg Frequency"),
    PduField("power_kva", 8, Scaling.MILLI, "kVA"),
    PduField("power_kw", 8, Scaling.MILLI, "kW"),
    PduField("energy_kwh", 8, Scaling.CENTI, "kWh"),
    PduField("kvrh_lead", 8, Scaling.CENTI, "kVRh Lead"),
    PduField("kvrh_lag", 8, Scaling.CENTI, "kVRh Lag"),
    PduField("energy_kvah", 8, Scaling.CENTI, "kVAh"),
)

PDU_HEX_LENGTH = sum(f.width for f in PDU_LAYOUT)

_HEX = re.compile(r"^[0-9A-Fa-f]*$")


@dataclass(frozen=True)
class EnergyReading:
    r_current: Decimal = Decimal(0)
    y_current: Decimal = Decimal(0)
    b_current: Decimal = Decimal(0)
    r_voltage: Decimal = Decimal(0)
    y_voltage: Decimal = Decimal(0)
    b_voltage: Decimal = Decimal(0)
    avg_pf: Decimal = Decimal(0)
    avg_freq: Decimal = Decimal(0)
    power_kva: Decimal = Decimal(0)
    power_kw: Decimal = Decimal(0)
    energy_kwh: Decimal = Decimal(0)
    kvrh_lead: Decimal = Decimal(0)
    kvrh_lag: Decimal = Decimal(0)
    energy_kvah: Decimal = Decimal(0)

    def as_dict(self) -> Dict[str, Decimal]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def as_parameters(self) -> Dict[str, float]:
        """Values keyed by the energy model's descriptor parameter names."""
        return {f.parameter: float(getattr(self, f.name)) for f in PDU_LAYOUT}

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "EnergyReading":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"Unknown energy reading fields: {unknown}")
        return cls(**{k: Decimal(str(v)) for k, v in values.items()})


def _clean(hex_text: str) -> str:
    text = "".join((hex_text or "").split())
    if text[:2].lower() == "0x":
        text = text[2:]
    return text


def decode_pdu(hex_text: str) -> EnergyReading:
    """
    Decode one payload into an EnergyReading.

    Raises:
        NonHexDigit: the payload contains a non-hex character
        TooShort: fewer than PDU_HEX_LENGTH hex characters
    """
    text = _clean(hex_text)
    if not _HEX.match(text):
        raise NonHexDigit(f"Payload contains non-hex characters: {hex_text!r}")
    if len(text) < PDU_HEX_LENGTH:
        raise TooShort(f"Payload has {len(text)} hex characters, need {PDU_HEX_LENGTH}")

    values = {}
    offset = 0
    for field_ in PDU_LAYOUT:
        values[field_.name] = field_.decode(text[offset:offset + field_.width])
        offset += field_.width
    return EnergyReading(**values)


def encode_pdu(reading: EnergyReading) -> str:
    """Inverse of decode_pdu; raises FieldOverflow when a value does not fit its width."""
    return "".join(f.encode(getattr(reading, f.name)) for f in PDU_LAYOUT)


def split_pdu(hex_text: str) -> List[Tuple[str, str]]:
    """(field name, hex slice) pairs, for printing the decoding table."""
    text = _clean(hex_text)
    pairs = []
    offset = 0
    for field_ in PDU_LAYOUT:
        pairs.append((field_.name, text[offset:offset + field_.width]))
        offset += field_.width
    return pairs
