"""
Request surface over the resource tree.

MonitorApi.handle() turns an ApiRequest (method, uri, headers, body) into an
ApiResponse carrying the oneM2M envelope ("m2m:cin", "m2m:grp", "m2m:uril", ...).
It is framework-free; monitor/app.py mounts it on FastAPI.
"""
import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlsplit

from core.errors import BadRequest, NotFound, ResourceError
from core.resources import Container, ResourceType
from core.tree import MemberResult, ResourceTree
from utils.logging_setup import get_logger

logger = get_logger("MonitorApi")

ORIGIN_HEADER = "x-m2m-origin"

# oneM2M response status codes used in aggregated fan-out responses
_RSC = {200: 2000, 201: 2001, 400: 4000, 401: 4101, 403: 4103, 404: 4004, 409: 4105}

_TY = re.compile(r"ty=(\d+)")


@dataclass
class ApiRequest:
    method: str
    uri: str
    headers: Dict[str, str] = field(default_factory=dict)
    body: Any = None

    def header(self, name: str) -> Optional[str]:
        for key, value in self.headers.items():
            if key.lower() == name.lower():
                return value
        return None

    @property
    def originator(self) -> Optional[str]:
        return self.header(ORIGIN_HEADER)


@dataclass
class ApiResponse:
    status: int
    body: Dict[str, Any]

    def json(self) -> Dict[str, Any]:
        return self.body


def _split(uri: str) -> Tuple[str, Dict[str, List[str]]]:
    parts = urlsplit(uri)
    path = parts.path
    if path.startswith("/~"):
        path = path[2:]
    return path.rstrip("/") or "/", parse_qs(parts.query, keep_blank_values=True)


def _member_entry(result: MemberResult) -> Dict[str, Any]:
    entry: Dict[str, Any] = {"rsc": _RSC.get(result.status, 5000), "to": result.mid}
    if result.ok:
        if isinstance(result.value, list):
            entry["pc"] = {"m2m:cin": [cin.attributes() for cin in result.value]}
        else:
            entry["pc"] = result.value.representation()
    else:
        entry["pc"] = {"m2m:dbg": result.error}
    return entry


class MonitorApi:
    def __init__(self, tree: ResourceTree):
        self.tree = tree

    def handle(self, req: ApiRequest) -> ApiResponse:
        """Route one request; every ResourceError becomes its status plus an m2m:dbg body."""
        try:
            path, query = _split(req.uri)
            method = req.method.upper()
            if method == "GET":
                response = self._get(path, query, req.originator)
            elif method == "POST":
                response = self._post(path, req)
            elif method == "PUT":
                response = self._put(path, req)
            elif method == "DELETE":
                node = self.tree.resolve(path)
                body = node.representation()
                self.tree.delete_resource(node, req.originator)
                response = ApiResponse(200, body)
            else:
                raise BadRequest(f"Unsupported method {req.method}")
        except ResourceError as e:
            response = ApiResponse(e.status, {"m2m:dbg": e.message})

        logger.info(f"[MonitorApi] {req.method.upper()} | uri={req.uri} | status={response.status}")
        return response

    # ------------------------------------------------------------------
    def _get(self, path: str, query: Dict[str, List[str]], originator: str) -> ApiResponse:
        if query.get("fu", [""])[0] == "1":
            return ApiResponse(200, {"m2m:uril": self.tree.discover(query.get("lbl", []), originator)})

        rcn = query.get("rcn", [""])[0]
        head, _, last = path.rpartition("/")

        if last == "fopt" or head.endswith("/fopt"):
            return self._fanout(path, last, rcn, originator)
        if last == "la":
            return ApiResponse(200, self.tree.latest(head, originator).representation())
        if last == "ol":
            return ApiResponse(200, self.tree.oldest(head, originator).representation())

        node = self.tree.retrieve(path, originator)
        if rcn == "4" and isinstance(node, Container):
            body = node.attributes()
            body["m2m:cin"] = [cin.attributes() for cin in self.tree.all_data(node, originator)]
            return ApiResponse(200, {"m2m:cnt": body})
        if rcn and rcn not in ("1", "4"):
            raise BadRequest(f"Unsupported result content rcn={rcn}")
        return ApiResponse(200, node.representation())

    def _fanout(self, path: str, last: str, rcn: str, originator: str) -> ApiResponse:
        if last == "fopt":
            group_path, verb = path[: -len("/fopt")], "all" if rcn == "4" else None
        else:
            group_path = path[: -len(f"/fopt/{last}")]
            verb = {"la": "latest", "ol": "oldest"}.get(last)
        if verb is None:
            raise BadRequest(f"Unsupported fan-out request {path}")
        results = self.tree.group_fanout(group_path, verb, originator)
        return ApiResponse(200, {"m2m:agr": {"m2m:rsp": [_member_entry(r) for r in results]}})

    # ------------------------------------------------------------------
    def _decode_body(self, req: ApiRequest) -> Dict[str, Any]:
        body = req.body
        if isinstance(body, (bytes, str)):
            try:
                body = json.loads(body or "{}")
            except json.JSONDecodeError as e:
                raise BadRequest(f"Body is not valid JSON: {e}")
        if not isinstance(body, dict) or len(body) != 1:
            raise BadRequest("Body must be a single m2m:* envelope")
        return body

    def _post(self, path: str, req: ApiRequest) -> ApiResponse:
        body = self._decode_body(req)
        envelope, attrs = next(iter(body.items()))
        match = _TY.search(req.header("content-type") or "")
        if match:
            try:
                kind = ResourceType(int(match.group(1)))
            except ValueError:
                raise BadRequest(f"Unsupported resource type ty={match.group(1)}")
        else:
            kinds = {t.envelope: t for t in ResourceType}
            if envelope not in kinds:
                raise BadRequest(f"Unknown resource envelope {envelope}")
            kind = kinds[envelope]
        if not isinstance(attrs, dict):
            raise BadRequest(f"{envelope} must be an object")

        node = self.tree.create_resource(path, kind, attrs, req.originator)
        return ApiResponse(201, node.representation())

    def _put(self, path: str, req: ApiRequest) -> ApiResponse:
        body = self._decode_body(req)
        _, attrs = next(iter(body.items()))
        node = self.tree.update_resource(path, attrs, req.originator)
        return ApiResponse(200, node.representation())

    # ------------------------------------------------------------------
    def create_subscription(self, cnt: str, nu: str, originator: str, rn: Optional[str] = None):
        """Subscribe a notification URI to a data container (needs NOTIFY)."""
        node = self.tree.resolve(cnt)
        if node.ty != ResourceType.CNT:
            raise NotFound(f"{cnt} is not a container")
        spec = {"nu": [nu]}
        if rn:
            spec["rn"] = rn
        return self.tree.create_resource(node, ResourceType.SUB, spec, originator)
