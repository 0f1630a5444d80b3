"""
Charge-point session logic on top of the monitor platform.

A session runs Idle -> Authenticating -> Charging -> Settling -> Updating -> Idle.
Users live under AE-EV-Chargers/USER-DATA/<RFID> and chargers under
CHARGER-DATA/CHARGER-<n>; each has an INFO container and a TRANSACTIONS
container. The wallet balance is the "CURRENT AMOUNT" of the user's latest
transaction. Settlement deducts what was consumed, not what was entered, and
the balance may go negative. When the platform is unreachable the two
transaction records are kept in a local pending journal and replayed later.
"""
import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from core.payload import parse_utc_offset
from ingest.errors import IngestError, InsufficientFunds, PlatformUnreachable, SessionStateError, UserNotFound
from ingest.platform_client import PlatformClient
from utils.journal import Journal
from utils.logging_setup import get_logger
from utils.settings import ConfigError, load_yaml

logger = get_logger("ChargePoint")

USER_INFO = "USER-INFO"
CHARGER_INFO = "CHARGER-INFO"
TRANSACTIONS = "TRANSACTIONS"

USER_ID = "USER ID"
METER_ID = "METER ID"
TXN_TIME = "TRANSACTION DATE-TIME"
USER_TXN_AMOUNT = "TRANSACTION AMOUNT (IN RS)"
CHARGER_TXN_AMOUNT = "TRANSACTION AMOUNT IN RS"
USER_BALANCE = "CURRENT AMOUNT IN USER'S ACCOUNT (IN RS)"

TOPUP_METER = "wallet-topup"

_CENT = Decimal("0.01")


def money(value: Any) -> Decimal:
    return Decimal(str(value)).quantize(_CENT, rounding=ROUND_HALF_UP)


def money_out(value: Decimal) -> Any:
    """Whole rupees print as ints (1000), the rest as floats (412.5)."""
    return int(value) if value == value.to_integral_value() else float(value)


class ChargerState(str, enum.Enum):
    IDLE = "Idle"
    AUTHENTICATING = "Authenticating"
    CHARGING = "Charging"
    SETTLING = "Settling"
    UPDATING = "Updating"


@dataclass(frozen=True)
class TariffBand:
    start: int
    end: int
    rate: Decimal


class TariffTable:
    """Rate per kWh by local hour of day."""

    def __init__(self, bands: List[TariffBand], tz: timezone):
        self.bands = sorted(bands, key=lambda b: b.start)
        self.tz = tz
        covered = [h for b in self.bands for h in range(b.start, b.end)]
        if sorted(covered) != list(range(24)):
            raise ConfigError("Tariff bands must cover every hour 0-23 exactly once")

    @classmethod
    def load(cls, path: Path) -> "TariffTable":
        raw = load_yaml(path)
        try:
            bands = [TariffBand(int(b["start"]), int(b["end"]), money(b["rate"])) for b in raw["bands"]]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Tariff file {path} is incomplete: {e}") from e
        return cls(bands, parse_utc_offset(raw.get("utc_offset", "+05:30")))

    def rate_at(self, moment: datetime) -> Decimal:
        hour = moment.astimezone(self.tz).hour
        for band in self.bands:
            if band.start <= hour < band.end:
                return band.rate
        raise ConfigError(f"No tariff band for hour {hour}")


@dataclass
class ChargeSession:
    rfid: str
    user_id: str
    entered_amount: Decimal
    tariff: Decimal
    balance_before: Decimal
    started_at: datetime
    kwh: Decimal = Decimal(0)
    consumed: Decimal = Decimal(0)
    state: ChargerState = ChargerState.CHARGING
    transactions: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def balance_after(self) -> Decimal:
        return self.balance_before - self.consumed


class ChargePoint:
    def __init__(
        self,
        client: PlatformClient,
        tariffs: TariffTable,
        charger_id: str = "CHARGER-1",
        meter_id: str = "test-charger",
        ae: str = "AE-EV-Chargers",
        root_path: str = "/in-cse/in-name",
        clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
        pending_path: Optional[Path] = None,
    ):
        self.client = client
        self.tariffs = tariffs
        self.charger_id = charger_id
        self.meter_id = meter_id
        self.clock = clock
        self.state = ChargerState.IDLE
        self.session: Optional[ChargeSession] = None
        self.pending = Journal(pending_path)
        self.ae_path = f"{root_path}/{ae}"

    # ------------------------------------------------------------------
    # paths
    # ------------------------------------------------------------------
    def user_path(self, rfid: str) -> str:
        return f"{self.ae_path}/USER-DATA/{rfid}"

    def charger_path(self) -> str:
        return f"{self.ae_path}/CHARGER-DATA/{self.charger_id}"

    def _stamp(self) -> str:
        return self.clock().astimezone(self.tariffs.tz).strftime("%Y-%m-%d %H:%M:%S.%f")

    # ------------------------------------------------------------------
    # registration
    # ------------------------------------------------------------------
    def register_user(
        self, rfid: str, name: str, email: str = "", phone: str = "",
        balance: Any = 0, user_id: Optional[str] = None,
    ) -> str:
        """Create USER-DATA/<rfid> with its info and an opening wallet transaction."""
        path = self.user_path(rfid)
        if self.client.exists(path):
            logger.info(f"[ChargePoint] REGISTER SKIP | rfid={rfid} | reason=already registered")
            return path
        self.client.create_container(f"{self.ae_path}/USER-DATA", rfid, ["USER", rfid])
        self.client.create_container(path, USER_INFO, [USER_INFO])
        self.client.create_container(path, TRANSACTIONS, [TRANSACTIONS])
        info = {"NAME": name, "EMAIL ID": email, "PHONE NUMBER": phone}
        self.client.insert_cin(f"{path}/{USER_INFO}", json.dumps(info), [rfid])
        opening = money(balance)
        self.client.insert_cin(f"{path}/{TRANSACTIONS}", json.dumps({
            USER_ID: user_id or rfid,
            METER_ID: TOPUP_METER,
            TXN_TIME: self._stamp(),
            USER_TXN_AMOUNT: money_out(opening),
            USER_BALANCE: money_out(opening),
        }), [rfid])
        logger.info(f"[ChargePoint] REGISTER USER | rfid={rfid} | balance={opening}")
        return path

    def register_charger(self, location: Optional[Dict[str, float]] = None) -> str:
        path = self.charger_path()
        if self.client.exists(path):
            return path
        self.client.create_container(f"{self.ae_path}/CHARGER-DATA", self.charger_id, ["CHARGER", self.charger_id])
        self.client.create_container(path, CHARGER_INFO, [CHARGER_INFO])
        self.client.create_container(path, TRANSACTIONS, [TRANSACTIONS])
        number = self.charger_id.rsplit("-", 1)[-1]
        info = {"CHARGER ID": f"Charger - {number}", "GEO-LOCATION": location or {}}
        self.client.insert_cin(f"{path}/{CHARGER_INFO}", json.dumps(info), [self.charger_id])
        logger.info(f"[ChargePoint] REGISTER CHARGER | charger={self.charger_id}")
        return path

    # ------------------------------------------------------------------
    # session
    # ------------------------------------------------------------------
    def _wallet(self, rfid: str) -> Tuple[str, Decimal]:
        """Newest balance for the RFID; a buffered transaction is newer than anything on the platform."""
        path = f"{self.user_path(rfid)}/{TRANSACTIONS}"
        buffered = [r["record"] for r in self.pending.replay() if r["path"] == path]
        if buffered:
            return buffered[-1].get(USER_ID, rfid), money(buffered[-1].get(USER_BALANCE, 0))
        latest = self.client.latest(path)
        if latest is None:
            return rfid, Decimal(0)
        record = json.loads(latest["con"])
        return record.get(USER_ID, rfid), money(record.get(USER_BALANCE, 0))

    def authenticate(self, rfid: str, amount: Any) -> ChargeSession:
        """
        Swipe + entered amount. Freezes the tariff for the whole session.

        Raises:
            UserNotFound: no USER-DATA container for the RFID
            InsufficientFunds: wallet balance below the entered amount
            PlatformUnreachable: the platform could not be asked
        """
        if self.state != ChargerState.IDLE:
            raise SessionStateError(f"Charger busy ({self.state.value})")
        entered = money(amount)
        if entered <= 0:
            raise IngestError("Entered amount must be positive")

        self.state = ChargerState.AUTHENTICATING
        try:
            if not self.client.exists(self.user_path(rfid)):
                raise UserNotFound()
            if len(self.pending):
                self.replay_pending()
            user_id, balance = self._wallet(rfid)
            if balance < entered:
                raise InsufficientFunds()
        except IngestError as e:
            self.state = ChargerState.IDLE
            logger.info(f"[ChargePoint] AUTH FAILED | rfid={rfid} | reason={e.message}")
            raise

        started = self.clock()
        self.session = ChargeSession(
            rfid=rfid, user_id=user_id, entered_amount=entered,
            tariff=self.tariffs.rate_at(started), balance_before=balance, started_at=started,
        )
        self.state = ChargerState.CHARGING
        logger.info(
            f"[ChargePoint] CHARGING | rfid={rfid} | entered={entered} | balance={balance} | tariff={self.session.tariff}"
        )
        return self.session

    def meter(self, kwh: Any) -> Decimal:
        """Add delivered energy; returns the consumed value so far at the frozen tariff."""
        session = self._require(ChargerState.CHARGING)
        delivered = Decimal(str(kwh))
        if delivered < 0:
            raise IngestError("Delivered energy cannot be negative")
        session.kwh += delivered
        session.consumed = money(session.kwh * session.tariff)
        return session.consumed

    def settle(self, consumed_value: Any = None) -> Tuple[Dict[str, Any], Dict[str, Any]]:
        """
        Deduct the consumed value and write the user and charger transactions.

        Returns:
            (user transaction, charger transaction) as written (or buffered)
        """
        session = self._require(ChargerState.CHARGING)
        if consumed_value is not None:
            session.consumed = money(consumed_value)
        if session.consumed < 0:
            raise IngestError("Consumed value cannot be negative")

        self.state = ChargerState.SETTLING
        stamp = self._stamp()
        user_txn = {
            USER_ID: session.user_id,
            METER_ID: self.meter_id,
            TXN_TIME: stamp,
            USER_TXN_AMOUNT: money_out(session.consumed),
            USER_BALANCE: money_out(session.balance_after),
        }
        charger_txn = {
            USER_ID: session.user_id,
            METER_ID: self.meter_id,
            TXN_TIME: stamp,
            CHARGER_TXN_AMOUNT: money_out(session.consumed),
        }
        session.transactions = {"user": user_txn, "charger": charger_txn}

        self.state = ChargerState.UPDATING
        writes = [
            (f"{self.user_path(session.rfid)}/{TRANSACTIONS}", user_txn, session.rfid),
            (f"{self.charger_path()}/{TRANSACTIONS}", charger_txn, self.charger_id),
        ]
        for index, (path, record, label) in enumerate(writes):
            try:
                self.client.insert_cin(path, json.dumps(record), [label])
            except PlatformUnreachable:
                for pending_path, pending_record, pending_label in writes[index:]:
                    self.pending.append({"path": pending_path, "record": pending_record, "label": pending_label})
                logger.warning(f"[ChargePoint] BUFFERED | rfid={session.rfid} | pending={len(writes) - index}")
                break

        logger.info(
            f"[ChargePoint] SETTLED | rfid={session.rfid} | entered={session.entered_amount} | "
            f"deducted={session.consumed} | balance={session.balance_after}"
        )
        self.state = ChargerState.IDLE
        self.session = None
        return user_txn, charger_txn

    def replay_pending(self) -> int:
        """Push buffered transactions in order; stops at the first failure and keeps the rest."""
        records = list(self.pending.replay())
        sent = 0
        for record in records:
            try:
                self.client.insert_cin(record["path"], json.dumps(record["record"]), [record["label"]])
            except PlatformUnreachable:
                break
            sent += 1
        self.pending.truncate()
        for record in records[sent:]:
            self.pending.append(record)
        if sent:
            logger.info(f"[ChargePoint] REPLAYED | sent={sent} | remaining={len(records) - sent}")
        return sent

    def balance(self, rfid: str) -> Decimal:
        if not self.client.exists(self.user_path(rfid)):
            raise UserNotFound()
        return self._wallet(rfid)[1]

    def _require(self, state: ChargerState) -> ChargeSession:
        if self.state != state or self.session is None:
            raise SessionStateError(f"Expected state {state.value}, charger is {self.state.value}")
        return self.session


# ----------------------------------------------------------------------
# scripted scenarios
# ----------------------------------------------------------------------
def run_scenarios(point: ChargePoint, scenario_path: Path, set_clock: Callable[[datetime], None]) -> List[Dict[str, Any]]:
    """
    Run every scenario of a charger scenario file against one charge point.

    Each result carries the observed outcome and whether it matched "expect".
    """
    raw = load_yaml(scenario_path)
    charger = raw.get("charger") or {}
    results = []

    for scenario in raw.get("scenarios") or []:
        at = datetime.fromisoformat(scenario["at"])
        set_clock(at)
        point.register_charger(charger.get("location"))
        for user in scenario.get("users") or []:
            point.register_user(
                rfid=str(user["rfid"]), name=user.get("name", ""), email=user.get("email", ""),
                phone=user.get("phone", ""), balance=user.get("balance", 0), user_id=user.get("user_id"),
            )

        outcome: Dict[str, Any] = {"name": scenario["name"]}
        try:
            point.authenticate(str(scenario["rfid"]), scenario["amount"])
            point.meter(scenario.get("kwh", 0))
            user_txn, _ = point.settle()
            outcome["deducted"] = user_txn[USER_TXN_AMOUNT]
            outcome["balance"] = user_txn[USER_BALANCE]
        except IngestError as e:
            outcome["error"] = e.message

        expected = scenario.get("expect") or {}
        outcome["passed"] = all(outcome.get(k) == v for k, v in expected.items())
        results.append(outcome)
        logger.info(f"[ChargePoint] SCENARIO | name={scenario['name']} | passed={outcome['passed']}")
    return results
