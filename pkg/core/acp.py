"""
Access control policies.

An ACOP is a 6-bit mask over CREATE, RETRIEVE, UPDATE, DELETE, NOTIFY and
DISCOVERY (bit 0 to bit 5). acp-admin carries 63 (all rights), acp-guest 34
(RETRIEVE + DISCOVERY).
"""
import enum
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List

from core.errors import InvalidAcop

MAX_ACOP = 63


class Permission(enum.IntFlag):
    CREATE = 1
    RETRIEVE = 2
    UPDATE = 4
    DELETE = 8
    NOTIFY = 16
    DISCOVERY = 32


PERMISSIONS = (
    Permission.CREATE,
    Permission.RETRIEVE,
    Permission.UPDATE,
    Permission.DELETE,
    Permission.NOTIFY,
    Permission.DISCOVERY,
)


def acop_encode(perms: Iterable[Permission]) -> int:
    """Sum of the bit values of the given permissions."""
    return sum(int(p) for p in set(perms))


def acop_decode(acop: int) -> FrozenSet[Permission]:
    """Exact bit expansion of an ACOP.

    Raises:
        InvalidAcop: if acop is not an integer in 0..63
    """
    if isinstance(acop, bool) or not isinstance(acop, int) or not 0 <= acop <= MAX_ACOP:
        raise InvalidAcop(f"acop must be an integer in 0..{MAX_ACOP}, got {acop!r}")
    return frozenset(p for p in PERMISSIONS if acop & p)


@dataclass(frozen=True)
class AccessRule:
    originator: str
    acop: int

    def __post_init__(self):
        acop_decode(self.acop)

    def to_acr(self) -> Dict[str, Any]:
        return {"acor": [self.originator], "acop": self.acop}


@dataclass
class AccessPolicy:
    acpi: str
    rn: str
    rules: List[AccessRule]
    self_rules: List[AccessRule] = field(default_factory=list)

    def __post_init__(self):
        if not self.rules:
            raise InvalidAcop(f"Access policy {self.rn} needs at least one rule")

    def allows(self, originator: str, op: Permission) -> bool:
        return any(
            rule.originator == originator and op in acop_decode(rule.acop)
            for rule in self.rules
        )

    def originators(self) -> List[str]:
        return [rule.originator for rule in self.rules + self.self_rules]

    @classmethod
    def from_privileges(cls, acpi: str, rn: str, pv: Dict[str, Any], pvs: Dict[str, Any] = None) -> "AccessPolicy":
        """Build a policy from oneM2M pv/pvs bodies: {"acr": [{"acor": [...], "acop": n}]}."""
        return cls(acpi=acpi, rn=rn, rules=_rules_from(pv), self_rules=_rules_from(pvs or {}))

    def privileges(self) -> Dict[str, Any]:
        return {"acr": [rule.to_acr() for rule in self.rules]}

    def self_privileges(self) -> Dict[str, Any]:
        return {"acr": [rule.to_acr() for rule in self.self_rules]}


def _rules_from(privileges: Dict[str, Any]) -> List[AccessRule]:
    rules = []
    for acr in (privileges or {}).get("acr", []):
        acors = acr.get("acor", [])
        if isinstance(acors, str):
            acors = acors.split()
        for originator in acors:
            rules.append(AccessRule(originator=originator, acop=acr.get("acop")))
    return rules


def check_access(policies: Iterable[AccessPolicy], originator: str, op: Permission) -> bool:
    """Allow iff some rule of some policy names the originator and grants op."""
    return any(policy.allows(originator, op) for policy in policies)
