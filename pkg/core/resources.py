"""
Resource node types of the tree.

Every node is addressable two ways: by its unstructured id ri
("/in-cse/cnt-12") and by its structured path ("/in-cse/in-name/AE-AQ/AQ-AN00-00/Data").
"""
import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, ClassVar, Deque, Dict, List, Optional

from core.acp import AccessPolicy


class ResourceType(enum.IntEnum):
    ACP = 1
    AE = 2
    CNT = 3
    CIN = 4
    CSE = 5
    GRP = 9
    SUB = 23

    @property
    def prefix(self) -> str:
        return _PREFIXES[self]

    @property
    def envelope(self) -> str:
        return _ENVELOPES[self]


_PREFIXES = {
    ResourceType.ACP: "acp",
    ResourceType.AE: "ae",
    ResourceType.CNT: "cnt",
    ResourceType.CIN: "cin",
    ResourceType.CSE: "cb",
    ResourceType.GRP: "grp",
    ResourceType.SUB: "sub",
}

_ENVELOPES = {
    ResourceType.ACP: "m2m:acp",
    ResourceType.AE: "m2m:ae",
    ResourceType.CNT: "m2m:cnt",
    ResourceType.CIN: "m2m:cin",
    ResourceType.CSE: "m2m:cb",
    ResourceType.GRP: "m2m:grp",
    ResourceType.SUB: "m2m:sub",
}


def expiry_from(ct: str) -> str:
    """Expiration time one year after creation (ct format YYYYMMDDTHHMMSS)."""
    return f"{int(ct[:4]) + 1:04d}{ct[4:]}"


@dataclass(kw_only=True)
class Resource:
    ty: ClassVar[ResourceType]

    rn: str
    ri: str
    pi: Optional[str]
    path: str
    ct: str
    lt: str
    lbl: List[str] = field(default_factory=list)
    acpi: List[str] = field(default_factory=list)
    children: Dict[str, str] = field(default_factory=dict)

    def common(self) -> Dict[str, Any]:
        return {"rn": self.rn, "ty": int(self.ty), "ri": self.ri, "pi": self.pi, "ct": self.ct, "lt": self.lt}

    def attributes(self) -> Dict[str, Any]:
        body = self.common()
        body["lbl"] = list(self.lbl)
        if self.acpi:
            body["acpi"] = list(self.acpi)
        return body

    def representation(self) -> Dict[str, Any]:
        return {self.ty.envelope: self.attributes()}

    def state(self) -> Dict[str, Any]:
        """Type-specific attributes written to the journal and snapshot."""
        return {"lbl": list(self.lbl), "acpi": list(self.acpi)}


@dataclass(kw_only=True)
class CSEBase(Resource):
    ty: ClassVar[ResourceType] = ResourceType.CSE
    csi: str = "/in-cse"

    def attributes(self) -> Dict[str, Any]:
        body = super().attributes()
        body["csi"] = self.csi
        body["cst"] = 1
        return body


@dataclass(kw_only=True)
class AccessControlPolicy(Resource):
    ty: ClassVar[ResourceType] = ResourceType.ACP
    policy: AccessPolicy

    def attributes(self) -> Dict[str, Any]:
        body = self.common()
        body["pv"] = self.policy.privileges()
        body["pvs"] = self.policy.self_privileges()
        return body

    def state(self) -> Dict[str, Any]:
        return {"pv": self.policy.privileges(), "pvs": self.policy.self_privileges()}


@dataclass(kw_only=True)
class ApplicationEntity(Resource):
    ty: ClassVar[ResourceType] = ResourceType.AE
    api: str = ""

    def attributes(self) -> Dict[str, Any]:
        body = super().attributes()
        body["api"] = self.api or self.rn
        body["aei"] = self.ri
        body["rr"] = False
        return body

    def state(self) -> Dict[str, Any]:
        return {**super().state(), "api": self.api}


@dataclass(kw_only=True)
class Container(Resource):
    ty: ClassVar[ResourceType] = ResourceType.CNT
    mni: int = 120
    mbs: int = 10000
    mia: int = 0
    st: int = 0
    cbs: int = 0
    et: str = ""
    # highest CIN sequence number ever inserted, evicted ones included
    last_seq: int = 0
    instances: Deque[str] = field(default_factory=deque)
    subscriptions: List[str] = field(default_factory=list)

    @property
    def cni(self) -> int:
        return len(self.instances)

    def attributes(self) -> Dict[str, Any]:
        body = super().attributes()
        body.update({
            "et": self.et or expiry_from(self.ct),
            "st": self.st,
            "mni": self.mni,
            "mbs": self.mbs,
            "mia": self.mia,
            "cni": self.cni,
            "cbs": self.cbs,
            "ol": f"{self.path}/ol",
            "la": f"{self.path}/la",
        })
        return body

    def state(self) -> Dict[str, Any]:
        return {
            **super().state(),
            "mni": self.mni,
            "mbs": self.mbs,
            "mia": self.mia,
            "et": self.et,
            "st": self.st,
            "last_seq": self.last_seq,
        }


@dataclass(kw_only=True)
class ContentInstance(Resource):
    ty: ClassVar[ResourceType] = ResourceType.CIN
    cnf: str = "text"
    con: str = ""
    st: int = 0

    @property
    def cs(self) -> int:
        return len(self.con.encode("utf-8"))

    def attributes(self) -> Dict[str, Any]:
        return {
            **self.common(),
            "lbl": list(self.lbl),
            "st": self.st,
            "cnf": self.cnf,
            "cs": self.cs,
            "con": self.con,
        }

    def state(self) -> Dict[str, Any]:
        return {"lbl": list(self.lbl), "cnf": self.cnf, "con": self.con, "st": self.st}


@dataclass(kw_only=True)
class Group(Resource):
    ty: ClassVar[ResourceType] = ResourceType.GRP
    mt: int = int(ResourceType.CNT)
    mid: List[str] = field(default_factory=list)
    mnm: int = 10

    def attributes(self) -> Dict[str, Any]:
        body = super().attributes()
        body.update({"mt": self.mt, "mid": list(self.mid), "mnm": self.mnm, "cnm": len(self.mid)})
        return body

    def state(self) -> Dict[str, Any]:
        return {**super().state(), "mt": self.mt, "mid": list(self.mid), "mnm": self.mnm}


@dataclass(kw_only=True)
class Subscription(Resource):
    ty: ClassVar[ResourceType] = ResourceType.SUB
    nu: List[str] = field(default_factory=list)
    creator: str = ""
    nct: int = 1

    def attributes(self) -> Dict[str, Any]:
        body = super().attributes()
        body.update({"nu": list(self.nu), "nct": self.nct, "cr": self.creator.split(":")[0]})
        return body

    def state(self) -> Dict[str, Any]:
        return {**super().state(), "nu": list(self.nu), "creator": self.creator}


RESOURCE_CLASSES = {
    ResourceType.ACP: AccessControlPolicy,
    ResourceType.AE: ApplicationEntity,
    ResourceType.CNT: Container,
    ResourceType.CIN: ContentInstance,
    ResourceType.CSE: CSEBase,
    ResourceType.GRP: Group,
    ResourceType.SUB: Subscription,
}

# which kinds may hang under which
ALLOWED_CHILDREN = {
    ResourceType.CSE: {ResourceType.ACP, ResourceType.AE, ResourceType.GRP},
    ResourceType.AE: {ResourceType.CNT, ResourceType.GRP, ResourceType.ACP},
    ResourceType.CNT: {ResourceType.CNT, ResourceType.CIN, ResourceType.SUB},
}
