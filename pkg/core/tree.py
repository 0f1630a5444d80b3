"""
The resource tree.

Holds every node in memory, indexed by ri and by structured path, and persists
mutations to an append-only journal (<data_dir>/tree/journal.jsonl) with a
periodic snapshot (<data_dir>/tree/snapshot.json).

Journal records, one JSON object per line:
  {"op": "create", "ty": int, "ri", "rn", "pi", "path", "ct", "state": {...}}
  {"op": "cin", "ri", "rn", "pi", "path", "ct", "state": {"lbl", "cnf", "con"}}
  {"op": "update", "ri", "lt", "attrs": {...}}
  {"op": "delete", "ri", "lt"}
state holds the kind-specific attributes (lbl, acpi, mni, nu, mid, pv/pvs, ...).

The snapshot is {"seq": int, "records": [...]} with one create or cin record
per live resource (each also carrying lt), parents before children and each
container's instances oldest first. Loading applies the snapshot, then replays
the journal; a snapshot truncates the journal.

Locking: structural mutations (create/update/delete) run under the tree lock;
content-instance inserts only take the lock of their container, so distinct
containers ingest in parallel. Lock order is tree lock, then container locks.
"""
import json
import os
import re
import threading
from contextlib import ExitStack
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

from core.acp import AccessPolicy, Permission, check_access
from core.errors import (
    AccessDenied,
    BadCredentials,
    BadRequest,
    DuplicateName,
    Empty,
    MalformedContent,
    NotFound,
    ResourceError,
)
from core.resources import (
    ALLOWED_CHILDREN,
    RESOURCE_CLASSES,
    AccessControlPolicy,
    CSEBase,
    Container,
    ContentInstance,
    Group,
    Resource,
    ResourceType,
    Subscription,
)
from utils.journal import Journal
from utils.logging_setup import get_logger

logger = get_logger("ResourceTree")

TIMESTAMP_FORMAT = "%Y%m%dT%H%M%S"
FANOUT_VERBS = ("latest", "oldest", "all")

_SEQ = re.compile(r"[-_](\d+)$")

ResourceRef = Union[str, Resource]
CinListener = Callable[[Container, ContentInstance], None]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _seq_of(ri: str) -> int:
    match = _SEQ.search(ri or "")
    return int(match.group(1)) if match else 0


@dataclass
class MemberResult:
    """One slot of a group fan-out, in mid order."""
    mid: str
    status: int
    value: Union[ContentInstance, List[ContentInstance], None] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == 200


class ResourceTree:
    def __init__(
        self,
        data_dir: Optional[Path] = None,
        clock: Callable[[], datetime] = utc_now,
        default_mni: int = 120,
        snapshot_every: int = 500,
        cse_id: str = "/in-cse",
        cse_name: str = "in-name",
        admin_origin: str = "admin:admin",
    ):
        self.clock = clock
        self.default_mni = default_mni
        self.snapshot_every = snapshot_every
        self.cse_id = cse_id
        self.cse_name = cse_name
        self.admin_origin = admin_origin

        self._nodes: Dict[str, Resource] = {}
        self._paths: Dict[str, str] = {}
        self._lock = threading.RLock()
        self._seq_lock = threading.Lock()
        self._cnt_locks: Dict[str, threading.RLock] = {}
        self._seq = 0
        self._since_snapshot = 0
        self._listeners: List[CinListener] = []

        self.data_dir = Path(data_dir) / "tree" if data_dir else None
        self.snapshot_path = self.data_dir / "snapshot.json" if self.data_dir else None
        self.journal = Journal(self.data_dir / "journal.jsonl" if self.data_dir else None)

        self._load()
        if self.cse_id not in self._nodes:
            self._bootstrap()

    # ------------------------------------------------------------------
    # addressing
    # ------------------------------------------------------------------
    @property
    def root(self) -> CSEBase:
        return self._nodes[self.cse_id]

    def resolve(self, ref: ResourceRef) -> Resource:
        """Look a node up by ri or structured path."""
        if isinstance(ref, Resource):
            if ref.ri not in self._nodes:
                raise NotFound(f"Resource {ref.path} no longer exists")
            return ref
        key = (ref or "").strip()
        if key.startswith("~"):
            key = key[1:]
        if not key.startswith("/"):
            key = "/" + key
        key = key.rstrip("/") or "/"
        node = self._nodes.get(key) or self._nodes.get(self._paths.get(key, ""))
        if node is None:
            raise NotFound(f"Resource not found: {ref}")
        return node

    def exists(self, ref: ResourceRef) -> bool:
        try:
            self.resolve(ref)
            return True
        except NotFound:
            return False

    def parent_of(self, node: Resource) -> Optional[Resource]:
        return self._nodes.get(node.pi) if node.pi else None

    def children_of(self, ref: ResourceRef, ty: Optional[ResourceType] = None) -> List[Resource]:
        node = self.resolve(ref)
        kids = [self._nodes[ri] for ri in list(node.children.values()) if ri in self._nodes]
        return [k for k in kids if ty is None or k.ty == ty]

    def nodes_of_type(self, ty: ResourceType) -> List[Resource]:
        return [n for n in list(self._nodes.values()) if n.ty == ty]

    def _cnt_lock(self, ri: str) -> threading.RLock:
        lock = self._cnt_locks.get(ri)
        if lock is None:
            lock = self._cnt_locks.setdefault(ri, threading.RLock())
        return lock

    def add_listener(self, listener: CinListener) -> None:
        """Register a callback run after every content-instance insert, outside all locks."""
        self._listeners.append(listener)

    # ------------------------------------------------------------------
    # access control
    # ------------------------------------------------------------------
    def policies_for(self, node: Resource) -> List[AccessPolicy]:
        """Policies of the nearest node on the path to the root that carries acpi."""
        current = node
        while current is not None:
            if current.acpi:
                policies = [
                    self._nodes[ri].policy for ri in current.acpi
                    if ri in self._nodes and isinstance(self._nodes[ri], AccessControlPolicy)
                ]
                if policies:
                    return policies
            current = self.parent_of(current)
        return []

    def _known_originators(self) -> List[str]:
        return [
            originator
            for acp in self.nodes_of_type(ResourceType.ACP)
            for originator in acp.policy.originators()
        ]

    def authenticate(self, originator: str) -> None:
        """
        Raises:
            BadCredentials: known user with the wrong password (or no originator)
            AccessDenied: user unknown to every policy
        """
        if not originator:
            raise BadCredentials("X-M2M-Origin is required")
        known = self._known_originators()
        if originator in known:
            return
        user = originator.split(":", 1)[0]
        if any(k.split(":", 1)[0] == user for k in known):
            raise BadCredentials(f"Bad credentials for originator {user}")
        raise AccessDenied(f"Originator {user} is not known")

    def check(self, node: Resource, originator: str, op: Permission) -> None:
        self.authenticate(originator)
        if not check_access(self.policies_for(node), originator, op):
            user = originator.split(":", 1)[0]
            logger.info(f"[ResourceTree] DENY | path={node.path} | originator={user} | op={op.name}")
            raise AccessDenied(f"{op.name} not permitted on {node.path} for {user}")

    # ------------------------------------------------------------------
    # create
    # ------------------------------------------------------------------
    def create_resource(
        self,
        parent: ResourceRef,
        kind: Union[int, ResourceType],
        spec: Dict[str, Any],
        originator: str,
    ) -> Resource:
        """
        Create a child resource.

        Raises:
            NotFound: parent missing
            AccessDenied / BadCredentials: originator lacks CREATE (NOTIFY for subscriptions)
            DuplicateName: rn already used among the parent's children
            BadRequest: the kind may not live under this parent, or its attributes are invalid
        """
        parent_node = self.resolve(parent)
        try:
            kind = ResourceType(int(kind))
        except ValueError:
            raise BadRequest(f"Unsupported resource type {kind}")

        if kind == ResourceType.CIN:
            spec = spec or {}
            cin, _ = self.insert_cin(parent_node, spec.get("con"), spec.get("lbl", []), originator, spec.get("cnf", "text"))
            return cin

        if kind not in ALLOWED_CHILDREN.get(parent_node.ty, set()):
            raise BadRequest(f"{kind.name} cannot be created under {parent_node.ty.name}")

        self.check(parent_node, originator, Permission.NOTIFY if kind == ResourceType.SUB else Permission.CREATE)

        spec = dict(spec or {})
        with self._lock:
            seq = self._next_seq()
            rn = spec.get("rn") or spec.get("m") or f"{kind.prefix}-{seq}"
            if rn in parent_node.children:
                raise DuplicateName(f"{rn} already exists under {parent_node.path}")
            ct = self._timestamp()
            record = {
                "op": "create",
                "ty": int(kind),
                "ri": f"{self.cse_id}/{kind.prefix}-{seq}",
                "rn": rn,
                "pi": parent_node.ri,
                "path": f"{parent_node.path}/{rn}",
                "ct": ct,
                "state": self._initial_state(kind, parent_node, spec, originator),
            }
            node = self._apply_create(record)
            self._commit(record)

        logger.info(f"[ResourceTree] CREATE | ty={kind.name} | path={node.path} | ri={node.ri}")
        self._maybe_snapshot()
        return node

    def _initial_state(self, kind: ResourceType, parent: Resource, spec: Dict[str, Any], originator: str) -> Dict[str, Any]:
        labels = spec.get("lbl", [])
        if not isinstance(labels, list) or not all(isinstance(label, str) for label in labels):
            raise BadRequest("lbl must be a list of strings")
        state: Dict[str, Any] = {"lbl": list(labels), "acpi": self._resolve_acpi(spec.get("acpi", []))}

        if kind == ResourceType.ACP:
            pv = spec.get("pv") or {}
            # validates the rules before anything is stored
            AccessPolicy.from_privileges("", spec.get("rn", ""), pv, spec.get("pvs"))
            return {"pv": pv, "pvs": spec.get("pvs") or {}}

        if kind == ResourceType.AE:
            state["api"] = spec.get("api", "")
        elif kind == ResourceType.CNT:
            mni = spec.get("mni", self.default_mni)
            if not isinstance(mni, int) or isinstance(mni, bool) or mni < 1:
                raise BadRequest(f"mni must be a positive integer, got {mni!r}")
            state.update({"mni": mni, "mbs": spec.get("mbs", 10000), "mia": spec.get("mia", 0), "et": spec.get("et", "")})
            if not state["acpi"]:
                state["acpi"] = [p.acpi for p in self.policies_for(parent)]
        elif kind == ResourceType.GRP:
            state.update(self._group_state(spec))
        elif kind == ResourceType.SUB:
            nu = spec.get("nu")
            if isinstance(nu, str):
                nu = [nu]
            if not nu:
                raise BadRequest("Subscription needs a notification URI (nu)")
            if parent.ty != ResourceType.CNT:
                raise BadRequest("Subscriptions attach to containers")
            state.update({"nu": list(nu), "creator": originator})
        return state

    def _group_state(self, spec: Dict[str, Any]) -> Dict[str, Any]:
        mt = int(spec.get("mt", int(ResourceType.CNT)))
        mid = spec.get("mid") or []
        mnm = int(spec.get("mnm", len(mid) or 1))
        if len(mid) > mnm:
            raise BadRequest(f"Group lists {len(mid)} members but mnm is {mnm}")
        members = []
        for member in mid:
            node = self.resolve(member)
            if int(node.ty) != mt:
                raise BadRequest(f"Group member {member} is a {node.ty.name}, expected type {mt}")
            members.append(node.path)
        return {"mt": mt, "mid": members, "mnm": mnm}

    def _resolve_acpi(self, acpi: Iterable[str]) -> List[str]:
        if isinstance(acpi, str):
            acpi = [acpi]
        resolved = []
        for ref in acpi or []:
            node = self.resolve(ref)
            if node.ty != ResourceType.ACP:
                raise BadRequest(f"acpi entry {ref} is not an access control policy")
            resolved.append(node.ri)
        return resolved

    # ------------------------------------------------------------------
    # content instances
    # ------------------------------------------------------------------
    def _container(self, ref: ResourceRef) -> Container:
        node = self.resolve(ref)
        if not isinstance(node, Container):
            raise BadRequest(f"{node.path} is not a container")
        return node

    def insert_cin(
        self,
        cnt: ResourceRef,
        con: str,
        labels: Optional[List[str]],
        originator: str,
        cnf: str = "text",
    ) -> Tuple[ContentInstance, Optional[str]]:
        """
        Append a content instance, evicting the oldest one when cni would exceed mni.

        Returns:
            (new instance, ri of the evicted instance or None)
        """
        container = self._container(cnt)
        self.check(container, originator, Permission.CREATE)
        if not isinstance(con, str):
            raise MalformedContent("con must be a string")

        with self._cnt_lock(container.ri):
            if container.ri not in self._nodes:
                raise NotFound(f"Container {container.path} was deleted")
            seq = self._next_seq()
            rn = f"cin_{seq}"
            record = {
                "op": "cin",
                "ri": f"{self.cse_id}/cin-{seq}",
                "rn": rn,
                "pi": container.ri,
                "path": f"{container.path}/{rn}",
                "ct": self._timestamp(),
                "state": {"lbl": list(labels or []), "cnf": cnf, "con": con},
            }
            evicted = self._apply_cin(record)
            cin = self._nodes[record["ri"]]
            self._commit(record)

        logger.debug(
            f"[ResourceTree] INSERT | cnt={container.path} | cni={container.cni} | evicted={evicted[0] if evicted else None}"
        )
        for listener in list(self._listeners):
            try:
                listener(container, cin)
            except Exception as e:
                logger.error(f"[ResourceTree] LISTENER FAILED | cnt={container.path} | error={e}")
        self._maybe_snapshot()
        return cin, (evicted[0] if evicted else None)

    def _read_instances(self, container: Container) -> List[str]:
        with self._cnt_lock(container.ri):
            return list(container.instances)

    def latest(self, cnt: ResourceRef, originator: str) -> ContentInstance:
        container = self._container(cnt)
        self.check(container, originator, Permission.RETRIEVE)
        instances = self._read_instances(container)
        if not instances:
            raise Empty(f"Container {container.path} holds no content instance")
        return self._nodes[instances[-1]]

    def oldest(self, cnt: ResourceRef, originator: str) -> ContentInstance:
        container = self._container(cnt)
        self.check(container, originator, Permission.RETRIEVE)
        instances = self._read_instances(container)
        if not instances:
            raise Empty(f"Container {container.path} holds no content instance")
        return self._nodes[instances[0]]

    def all_data(self, cnt: ResourceRef, originator: str) -> List[ContentInstance]:
        container = self._container(cnt)
        self.check(container, originator, Permission.RETRIEVE)
        return [self._nodes[ri] for ri in self._read_instances(container)]

    # ------------------------------------------------------------------
    # groups and discovery
    # ------------------------------------------------------------------
    def group_fanout(self, grp: ResourceRef, verb: str, originator: str) -> List[MemberResult]:
        """Apply latest/oldest/all to every member; failures are reported per slot."""
        group = self.resolve(grp)
        if not isinstance(group, Group):
            raise BadRequest(f"{group.path} is not a group")
        if verb not in FANOUT_VERBS:
            raise BadRequest(f"Unsupported fan-out verb {verb!r}")
        self.authenticate(originator)

        operation = {"latest": self.latest, "oldest": self.oldest, "all": self.all_data}[verb]
        results = []
        for mid in group.mid:
            try:
                results.append(MemberResult(mid=mid, status=200, value=operation(mid, originator)))
            except ResourceError as e:
                results.append(MemberResult(mid=mid, status=e.status, error=e.message))
        failed = sum(1 for r in results if not r.ok)
        logger.info(f"[ResourceTree] FANOUT | grp={group.path} | verb={verb} | members={len(results)} | failed={failed}")
        return results

    def discover(self, labels: Iterable[str], originator: str) -> List[str]:
        """Paths of every container whose labels include ALL requested labels, sorted."""
        self.check(self.root, originator, Permission.DISCOVERY)
        wanted = set(labels or [])
        matches = []
        for node in self.nodes_of_type(ResourceType.CNT):
            if not wanted.issubset(node.lbl):
                continue
            if check_access(self.policies_for(node), originator, Permission.DISCOVERY):
                matches.append(node.path)
        return sorted(matches)

    # ------------------------------------------------------------------
    # retrieve / update / delete
    # ------------------------------------------------------------------
    def retrieve(self, ref: ResourceRef, originator: str) -> Resource:
        node = self.resolve(ref)
        self.check(node, originator, Permission.RETRIEVE)
        return node

    def update_resource(self, ref: ResourceRef, attrs: Dict[str, Any], originator: str) -> Resource:
        """Update labels, acpi and type-specific attributes; shrinking mni evicts immediately."""
        node = self.resolve(ref)
        if node.ty == ResourceType.CIN:
            raise BadRequest("Content instances are immutable")
        self.check(node, originator, Permission.UPDATE)

        attrs = dict(attrs or {})
        updatable = {"lbl", "acpi", "mni", "mbs", "mia", "mid", "mnm", "nu", "pv", "pvs"}
        unknown = sorted(set(attrs) - updatable)
        if unknown:
            raise BadRequest(f"Attributes not updatable: {unknown}")
        if "acpi" in attrs:
            attrs["acpi"] = self._resolve_acpi(attrs["acpi"])
        if "mni" in attrs and (not isinstance(attrs["mni"], int) or attrs["mni"] < 1):
            raise BadRequest(f"mni must be a positive integer, got {attrs['mni']!r}")
        if isinstance(node, Group) and ("mid" in attrs or "mnm" in attrs):
            attrs.update(self._group_state({
                "mt": node.mt,
                "mid": attrs.get("mid", node.mid),
                "mnm": attrs.get("mnm", node.mnm),
            }))
        if isinstance(node, AccessControlPolicy) and "pv" in attrs:
            AccessPolicy.from_privileges(node.ri, node.rn, attrs["pv"], attrs.get("pvs"))

        with self._lock:
            record = {"op": "update", "ri": node.ri, "lt": self._timestamp(), "attrs": attrs}
            evicted = self._apply_update(record)
            self._commit(record)

        logger.info(f"[ResourceTree] UPDATE | path={node.path} | attrs={sorted(attrs)} | evicted={len(evicted)}")
        self._maybe_snapshot()
        return node

    def delete_resource(self, ref: ResourceRef, originator: str) -> None:
        node = self.resolve(ref)
        if node.ty == ResourceType.CSE:
            raise BadRequest("The CSE root cannot be deleted")
        self.check(node, originator, Permission.DELETE)
        with self._lock:
            record = {"op": "delete", "ri": node.ri, "lt": self._timestamp()}
            self._apply_delete(record)
            self._commit(record)
        logger.info(f"[ResourceTree] DELETE | path={node.path}")
        self._maybe_snapshot()

    # ------------------------------------------------------------------
    # record application (shared by live mutations, journal replay and snapshot load)
    # ------------------------------------------------------------------
    def _register(self, node: Resource) -> None:
        if isinstance(node, Container):
            self._cnt_lock(node.ri)
        self._nodes[node.ri] = node
        self._paths[node.path] = node.ri
        parent = self.parent_of(node)
        if parent is not None:
            parent.children[node.rn] = node.ri

    def _unregister(self, node: Resource) -> None:
        self._nodes.pop(node.ri, None)
        self._paths.pop(node.path, None)
        if isinstance(node, Container):
            self._cnt_locks.pop(node.ri, None)
        parent = self.parent_of(node)
        if parent is not None and parent.children.get(node.rn) == node.ri:
            del parent.children[node.rn]

    def _apply_create(self, record: Dict[str, Any]) -> Optional[Resource]:
        self._bump_seq(record["ri"])
        if record["ri"] in self._nodes:
            return self._nodes[record["ri"]]
        if record.get("pi") and record["pi"] not in self._nodes:
            return None

        kind = ResourceType(record["ty"])
        state = dict(record.get("state") or {})
        common = dict(rn=record["rn"], ri=record["ri"], pi=record.get("pi"), path=record["path"],
                      ct=record["ct"], lt=record.get("lt", record["ct"]))

        if kind == ResourceType.ACP:
            policy = AccessPolicy.from_privileges(record["ri"], record["rn"], state.get("pv"), state.get("pvs"))
            node = AccessControlPolicy(policy=policy, **common)
        else:
            node = RESOURCE_CLASSES[kind](**common, **state)

        self._register(node)
        parent = self.parent_of(node)
        if isinstance(node, Subscription) and isinstance(parent, Container):
            parent.subscriptions.append(node.ri)
        if isinstance(parent, Container):
            parent.st += 1
        return node

    def _apply_cin(self, record: Dict[str, Any], restoring: bool = False) -> List[str]:
        seq = _seq_of(record["ri"])
        self._bump_seq(record["ri"])
        container = self._nodes.get(record["pi"])
        if not isinstance(container, Container) or record["ri"] in self._nodes:
            return []
        if not restoring and seq <= container.last_seq:
            # already reflected by the snapshot, possibly evicted since
            return []

        state = record.get("state") or {}
        cin = ContentInstance(
            rn=record["rn"], ri=record["ri"], pi=container.ri, path=record["path"],
            ct=record["ct"], lt=record["ct"], lbl=list(state.get("lbl", [])),
            cnf=state.get("cnf", "text"), con=state.get("con", ""), st=state.get("st", 0),
        )
        self._register(cin)
        container.instances.append(cin.ri)
        container.cbs += cin.cs
        container.last_seq = max(container.last_seq, seq)
        if restoring:
            return []
        container.st += 1
        container.lt = record["ct"]
        return self._evict_overflow(container)

    def _evict_overflow(self, container: Container) -> List[str]:
        evicted = []
        while container.cni > container.mni:
            oldest = self._nodes.get(container.instances.popleft())
            if oldest is None:
                continue
            container.cbs -= oldest.cs
            container.st += 1
            self._unregister(oldest)
            evicted.append(oldest.ri)
        return evicted

    def _apply_update(self, record: Dict[str, Any]) -> List[str]:
        node = self._nodes.get(record["ri"])
        if node is None:
            return []
        attrs = record.get("attrs") or {}
        node.lt = record.get("lt", node.lt)
        if isinstance(node, AccessControlPolicy):
            if "pv" in attrs:
                node.policy = AccessPolicy.from_privileges(node.ri, node.rn, attrs["pv"], attrs.get("pvs"))
            return []

        for key, value in attrs.items():
            if hasattr(node, key):
                setattr(node, key, list(value) if isinstance(value, list) else value)
        if isinstance(node, Container):
            with self._cnt_lock(node.ri):
                node.st += 1
                return self._evict_overflow(node)
        return []

    def _apply_delete(self, record: Dict[str, Any]) -> None:
        node = self._nodes.get(record["ri"])
        if node is None:
            return
        for child_ri in list(node.children.values()):
            child = self._nodes.get(child_ri)
            if child is not None:
                self._apply_delete({"ri": child_ri})

        parent = self.parent_of(node)
        if isinstance(parent, Container):
            with self._cnt_lock(parent.ri):
                if isinstance(node, ContentInstance) and node.ri in parent.instances:
                    parent.instances.remove(node.ri)
                    parent.cbs -= node.cs
                if isinstance(node, Subscription) and node.ri in parent.subscriptions:
                    parent.subscriptions.remove(node.ri)
                parent.st += 1
        self._unregister(node)

    _APPLY = {"create": "_apply_create", "cin": "_apply_cin", "update": "_apply_update", "delete": "_apply_delete"}

    def _apply(self, record: Dict[str, Any]) -> None:
        method = self._APPLY.get(record.get("op"))
        if method is None:
            logger.warning(f"[ResourceTree] SKIP | reason=unknown record op | op={record.get('op')}")
            return
        getattr(self, method)(record)

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------
    def _timestamp(self) -> str:
        return self.clock().astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def _bump_seq(self, ri: str) -> None:
        with self._seq_lock:
            self._seq = max(self._seq, _seq_of(ri))

    def _commit(self, record: Dict[str, Any]) -> None:
        self.journal.append(record)
        self._since_snapshot += 1

    def _maybe_snapshot(self) -> None:
        if self.snapshot_path and self.snapshot_every and self._since_snapshot >= self.snapshot_every:
            self.snapshot()

    def _bootstrap(self) -> None:
        ct = self._timestamp()
        records = [
            {"op": "create", "ty": int(ResourceType.CSE), "ri": self.cse_id, "rn": self.cse_name, "pi": None,
             "path": f"{self.cse_id}/{self.cse_name}", "ct": ct, "state": {"lbl": [], "acpi": [], "csi": self.cse_id}},
        ]
        admin_ri = f"{self.cse_id}/acp-{self._next_seq()}"
        records.append({
            "op": "create", "ty": int(ResourceType.ACP), "ri": admin_ri, "rn": "acp-admin", "pi": self.cse_id,
            "path": f"{self.cse_id}/{self.cse_name}/acp-admin", "ct": ct,
            "state": {"pv": {"acr": [{"acor": [self.admin_origin], "acop": 63}]},
                      "pvs": {"acr": [{"acor": [self.admin_origin], "acop": 63}]}},
        })
        records.append({"op": "update", "ri": self.cse_id, "lt": ct, "attrs": {"acpi": [admin_ri]}})
        with self._lock:
            for record in records:
                self._apply(record)
                self._commit(record)
        logger.info(f"[ResourceTree] BOOTSTRAP | cse={self.cse_id} | admin_acp={admin_ri}")

    def _node_record(self, node: Resource) -> Dict[str, Any]:
        op = "cin" if isinstance(node, ContentInstance) else "create"
        record = {"op": op, "ri": node.ri, "rn": node.rn, "pi": node.pi, "path": node.path,
                  "ct": node.ct, "lt": node.lt, "state": node.state()}
        if op == "create":
            record["ty"] = int(node.ty)
            if isinstance(node, CSEBase):
                record["state"]["csi"] = node.csi
        return record

    def snapshot(self) -> Optional[Path]:
        """Write the full tree to snapshot.json and truncate the journal."""
        if self.snapshot_path is None:
            return None
        with self._lock, ExitStack() as held:
            records = []
            for node in list(self._nodes.values()):
                if isinstance(node, ContentInstance):
                    continue
                if isinstance(node, Container):
                    held.enter_context(self._cnt_lock(node.ri))
                    records.append(self._node_record(node))
                    records.extend(self._node_record(self._nodes[ri]) for ri in node.instances if ri in self._nodes)
                    # subscriptions hang off the container and are emitted with the rest of its children
                else:
                    records.append(self._node_record(node))

            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, 'w', encoding='utf-8') as f:
                json.dump({"seq": self._seq, "records": records}, f, sort_keys=True, ensure_ascii=False)
            os.replace(tmp, self.snapshot_path)
            self.journal.truncate()
            self._since_snapshot = 0

        logger.info(f"[ResourceTree] SNAPSHOT | records={len(records)} | path={self.snapshot_path}")
        return self.snapshot_path

    def _load(self) -> None:
        restored = replayed = 0
        if self.snapshot_path and self.snapshot_path.exists():
            with open(self.snapshot_path, 'r', encoding='utf-8') as f:
                snapshot = json.load(f)
            for record in snapshot.get("records", []):
                if record.get("op") == "cin":
                    self._apply_cin(record, restoring=True)
                else:
                    self._apply_create(record)
                    self._restore_links(record)
                restored += 1
            with self._seq_lock:
                self._seq = max(self._seq, int(snapshot.get("seq", 0)))

        for record in self.journal.replay():
            self._apply(record)
            replayed += 1

        if restored or replayed:
            logger.info(f"[ResourceTree] LOAD | snapshot_records={restored} | journal_records={replayed} | nodes={len(self._nodes)}")

    def _restore_links(self, record: Dict[str, Any]) -> None:
        # a snapshot container record already carries st; creating its children must not bump it again
        node = self._nodes.get(record["ri"])
        parent = self.parent_of(node) if node else None
        if isinstance(parent, Container):
            parent.st = max(parent.st - 1, 0)

    def close(self) -> None:
        if self.snapshot_path:
            self.snapshot()
