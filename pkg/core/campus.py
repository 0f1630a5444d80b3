"""
The campus deployment description (config/campus.yaml) and the tree seeder.

Campus is the single source for device models, nodes, catalogue groups and
the exchange attribute names; the lake, the exchange and the quality pipeline
all read it instead of keeping their own copies.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.acp import Permission, acop_encode
from core.errors import ResourceError
from core.payload import DescriptorRecord, ParameterSpec, VersionEntry
from core.resources import ResourceType
from core.tree import ResourceTree
from utils.logging_setup import get_logger
from utils.settings import ConfigError, load_yaml

logger = get_logger("Campus")

DESCRIPTOR = "Descriptor"
DATA = "Data"
USER_DATA = "USER-DATA"
CHARGER_DATA = "CHARGER-DATA"

PARAMETER_KINDS = ("quantity", "time", "text", "code")


@dataclass(frozen=True)
class ParameterModel:
    """One positional parameter: its descriptor sheet plus its exchange rendering."""
    spec: ParameterSpec
    exchange: str
    kind: str = "quantity"
    fmt: str = ""
    codes: Dict[int, str] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.spec.name

    def render(self, value: Any) -> Any:
        """Exchange representation of one raw value (quantities wrap as instValue)."""
        if self.kind == "code":
            if value is None:
                return "nan"
            return self.codes.get(int(value), str(value))
        if self.kind == "text":
            if value is None:
                return "nan"
            return self.fmt % value if self.fmt else str(value)
        return {"instValue": "nan" if value is None else value}


@dataclass
class DeviceModel:
    key: str
    ae: str
    vertical: str
    label_prefix: str
    device: Dict[str, Any]
    versions: List[VersionEntry]
    parameters: List[ParameterModel]
    parent: Optional[str] = None

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.parameters]

    def parameter(self, name: str) -> Optional[ParameterModel]:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def by_exchange(self, attr: str) -> Optional[ParameterModel]:
        for p in self.parameters:
            if p.exchange == attr:
                return p
        return None

    @property
    def timestamp(self) -> ParameterModel:
        for p in self.parameters:
            if p.kind == "time":
                return p
        raise ConfigError(f"Model {self.key} has no time parameter")


@dataclass
class CampusNode:
    node_id: str
    model: DeviceModel
    label: str
    lat: float
    lon: float
    address: str = ""
    group: Optional[str] = None
    versions: List[VersionEntry] = field(default_factory=list)
    item_created_at: str = ""

    def node_path(self, root_path: str) -> str:
        parts = [root_path, self.model.ae]
        if self.model.parent:
            parts.append(self.model.parent)
        parts.append(self.node_id)
        return "/".join(parts)

    def data_path(self, root_path: str) -> str:
        return f"{self.node_path(root_path)}/{DATA}"

    def descriptor_path(self, root_path: str) -> str:
        return f"{self.node_path(root_path)}/{DESCRIPTOR}"

    @property
    def current_version(self) -> VersionEntry:
        return self.versions[-1]

    def cin_labels(self, ver: Optional[str] = None) -> List[str]:
        """["AE-AQ", "AQ-KH00-00", "V3.0.02", "AQ-V3.0.02"]"""
        ver = ver or self.current_version.ver
        tag = self.model.ae[3:] if self.model.ae.startswith("AE-") else self.model.ae
        return [self.model.ae, self.node_id, ver, f"{tag}-{ver}"]

    def descriptor(self) -> DescriptorRecord:
        return DescriptorRecord(
            node_id=self.node_id,
            location=(self.lat, self.lon),
            device_model=dict(self.model.device),
            versions=list(self.versions),
            parameters=self.model.names,
            descriptions={p.name: p.spec for p in self.model.parameters},
        )


@dataclass
class ResourceGroupSpec:
    name: str
    access: str
    types: List[str]
    description_suffix: str
    tags: List[str]

    @property
    def is_open(self) -> bool:
        return self.access == "open"


class Campus:
    """Parsed campus.yaml."""

    def __init__(self, raw: Dict[str, Any]):
        self.provider: str = raw.get("provider", "")
        self.item_created_at: str = raw.get("default_item_created_at", "")
        self.acps: List[Dict[str, Any]] = raw.get("acps") or []
        self.root_acpi: List[str] = raw.get("root_acpi") or ["acp-admin"]
        self.tree_groups: List[Dict[str, Any]] = raw.get("tree_groups") or []
        self.chargers: Dict[str, Any] = raw.get("chargers") or {}

        self.models: Dict[str, DeviceModel] = {
            key: self._model(key, spec) for key, spec in (raw.get("models") or {}).items()
        }
        self.groups: Dict[str, ResourceGroupSpec] = {}
        for spec in raw.get("groups") or []:
            if spec.get("access") not in ("open", "secure"):
                raise ConfigError(f"Group {spec.get('name')} access must be open or secure")
            self.groups[spec["name"]] = ResourceGroupSpec(
                name=spec["name"],
                access=spec["access"],
                types=list(spec.get("types") or ["iudx:Resource"]),
                description_suffix=spec.get("description_suffix", ""),
                tags=list(spec.get("tags") or []),
            )

        self.nodes: Dict[str, CampusNode] = {}
        for spec in raw.get("nodes") or []:
            node = self._node(spec)
            if node.node_id in self.nodes:
                raise ConfigError(f"Node {node.node_id} declared twice")
            self.nodes[node.node_id] = node

    @classmethod
    def load(cls, path: Path) -> "Campus":
        return cls(load_yaml(path))

    # ------------------------------------------------------------------
    def _model(self, key: str, spec: Dict[str, Any]) -> DeviceModel:
        try:
            parameters = []
            for p in spec["parameters"]:
                kind = p.get("kind", "quantity")
                if kind not in PARAMETER_KINDS:
                    raise ConfigError(f"Model {key}: unknown parameter kind {kind!r}")
                parameters.append(ParameterModel(
                    spec=ParameterSpec(
                        name=p["name"],
                        description=p.get("description", ""),
                        datatype=p.get("datatype", "float"),
                        units=p.get("units", ""),
                        resolution=str(p.get("resolution", "")),
                        accuracy=str(p.get("accuracy", "")),
                        sensor=p.get("sensor", ""),
                    ),
                    exchange=p["exchange"],
                    kind=kind,
                    fmt=p.get("format", ""),
                    codes={int(k): str(v) for k, v in (p.get("codes") or {}).items()},
                ))
            return DeviceModel(
                key=key,
                ae=spec["ae"],
                vertical=spec["vertical"],
                label_prefix=spec.get("label_prefix", spec["vertical"]),
                device=spec.get("device") or {},
                versions=[VersionEntry(**v) for v in spec["versions"]],
                parameters=parameters,
                parent=spec.get("parent"),
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Model {key} is incomplete: {e}") from e

    def _node(self, spec: Dict[str, Any]) -> CampusNode:
        model = self.models.get(spec.get("model"))
        if model is None:
            raise ConfigError(f"Node {spec.get('id')} references unknown model {spec.get('model')!r}")
        group = spec.get("group")
        if group and group not in self.groups:
            raise ConfigError(f"Node {spec['id']} references unknown group {group!r}")
        versions = [VersionEntry(**v) for v in spec["versions"]] if spec.get("versions") else list(model.versions)
        return CampusNode(
            node_id=spec["id"],
            model=model,
            label=spec.get("label", spec["id"]),
            lat=float(spec["lat"]),
            lon=float(spec["lon"]),
            address=spec.get("address", ""),
            group=group,
            versions=versions,
            item_created_at=spec.get("item_created_at", self.item_created_at),
        )

    # ------------------------------------------------------------------
    def find(self, node_id: str) -> Optional[CampusNode]:
        return self.nodes.get(node_id)

    def nodes_of_model(self, key: str) -> List[CampusNode]:
        return [n for n in self.nodes.values() if n.model.key == key]

    def nodes_in_group(self, group: str) -> List[CampusNode]:
        return [n for n in self.nodes.values() if n.group == group]

    def verticals(self) -> List[str]:
        return sorted({m.vertical for m in self.models.values()})

    def node_for_labels(self, labels: List[str]) -> Optional[CampusNode]:
        for label in labels or []:
            if label in self.nodes:
                return self.nodes[label]
        return None


# ----------------------------------------------------------------------
# seeding
# ----------------------------------------------------------------------
class _Seeder:
    def __init__(self, tree: ResourceTree, originator: str):
        self.tree = tree
        self.originator = originator
        self.created = 0
        self.skipped = 0

    def ensure(self, parent: str, kind: ResourceType, spec: Dict[str, Any]):
        path = f"{parent}/{spec['rn']}"
        if self.tree.exists(path):
            self.skipped += 1
            return self.tree.resolve(path)
        self.created += 1
        return self.tree.create_resource(parent, kind, spec, self.originator)


def seed_tree(
    tree: ResourceTree,
    campus: Campus,
    originator: Optional[str] = None,
    lake_nu: Optional[str] = None,
    subscription_name: str = "SUB-LAKE",
) -> Dict[str, int]:
    """
    Create the campus tree: policies, AEs, node/Descriptor/Data containers,
    descriptor instances, resource groups, the charger AE and (optionally) the
    lake subscription on every Data container. Running it twice is a no-op.

    Returns:
        dict: counts of created and skipped resources
    """
    originator = originator or tree.admin_origin
    seeder = _Seeder(tree, originator)
    root = tree.root.path
    admin_acop = acop_encode(set(Permission))

    for acp in campus.acps:
        seeder.ensure(root, ResourceType.ACP, {
            "rn": acp["rn"],
            "pv": {"acr": [{"acor": [r["originator"]], "acop": int(r["acop"])} for r in acp["rules"]]},
            "pvs": {"acr": [{"acor": [originator], "acop": admin_acop}]},
        })

    acpi = [tree.resolve(f"{root}/{rn}").ri for rn in campus.root_acpi]
    if tree.root.acpi != acpi:
        tree.update_resource(tree.root, {"acpi": acpi}, originator)

    for node in campus.nodes.values():
        model = node.model
        ae_path = f"{root}/{model.ae}"
        seeder.ensure(root, ResourceType.AE, {"rn": model.ae, "api": f"N{model.ae}", "lbl": [model.ae]})
        parent = ae_path
        if model.parent:
            seeder.ensure(ae_path, ResourceType.CNT, {"rn": model.parent, "lbl": [model.parent]})
            parent = f"{ae_path}/{model.parent}"

        node_path = node.node_path(root)
        seeder.ensure(parent, ResourceType.CNT, {"rn": node.node_id, "lbl": [node.node_id]})
        seeder.ensure(node_path, ResourceType.CNT, {
            "rn": DESCRIPTOR, "lbl": [model.ae, node.node_id, DESCRIPTOR], "acpi": acpi,
        })
        seeder.ensure(node_path, ResourceType.CNT, {"rn": DATA, "lbl": model.names, "acpi": acpi})

        descriptor = tree.resolve(node.descriptor_path(root))
        if descriptor.cni == 0:
            tree.insert_cin(descriptor, node.descriptor().to_json(), node.cin_labels(), originator)
            seeder.created += 1

        if lake_nu:
            data = tree.resolve(node.data_path(root))
            seeder.ensure(data.path, ResourceType.SUB, {"rn": subscription_name, "nu": [lake_nu]})

    for group in campus.tree_groups:
        members = [n.data_path(root) for n in campus.nodes_of_model(group["model"])]
        seeder.ensure(f"{root}/{group['ae']}", ResourceType.GRP, {
            "rn": group["rn"], "mt": int(ResourceType.CNT), "mid": members, "mnm": len(members),
        })

    if campus.chargers:
        ae = campus.chargers.get("ae", "AE-EV-Chargers")
        seeder.ensure(root, ResourceType.AE, {"rn": ae, "api": f"N{ae}", "lbl": [ae]})
        for rn in (USER_DATA, CHARGER_DATA):
            seeder.ensure(f"{root}/{ae}", ResourceType.CNT, {"rn": rn, "lbl": [ae, rn], "acpi": acpi})

    summary = {"created": seeder.created, "skipped": seeder.skipped}
    logger.info(f"[Campus] SEED | nodes={len(campus.nodes)} | created={seeder.created} | skipped={seeder.skipped}")
    return summary


def read_descriptor(tree: ResourceTree, node: CampusNode, originator: str) -> DescriptorRecord:
    """The descriptor as stored in the tree (falls back to the campus sheet when unseeded)."""
    try:
        cin = tree.latest(node.descriptor_path(tree.root.path), originator)
        return DescriptorRecord.from_json(cin.con)
    except ResourceError:
        return node.descriptor()
