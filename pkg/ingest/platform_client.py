"""
Client used by edge adapters (charger, simulator) to talk to the monitor API.

Two transports share one interface: LocalTransport calls a MonitorApi in the
same process, HttpTransport goes over HTTP with requests. Either raises
PlatformUnreachable when the platform cannot be reached, which is what the
charger uses to decide to buffer transactions.
"""
import json
import threading
from typing import Any, Dict, List, Optional, Tuple

import requests

from core.resources import ResourceType
from ingest.errors import IngestError, PlatformUnreachable
from monitor.api import ApiRequest, MonitorApi
from utils.logging_setup import get_logger

logger = get_logger("PlatformClient")


class LocalTransport:
    """In-process transport; flip `online` to simulate an outage."""

    def __init__(self, api: MonitorApi):
        self.api = api
        self.online = True

    def send(self, method: str, uri: str, headers: Dict[str, str], body: Any = None) -> Tuple[int, Dict[str, Any]]:
        if not self.online:
            raise PlatformUnreachable("Monitor platform is offline")
        response = self.api.handle(ApiRequest(method=method, uri=uri, headers=headers, body=body))
        return response.status, response.body


class HttpTransport:
    def __init__(self, base_url: str, timeout: float = 5.0, session: Optional[requests.Session] = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self._lock = threading.Lock()

    def send(self, method: str, uri: str, headers: Dict[str, str], body: Any = None) -> Tuple[int, Dict[str, Any]]:
        url = f"{self.base_url}/~{uri}" if uri.startswith("/") else f"{self.base_url}/~/{uri}"
        data = json.dumps(body) if body is not None else None
        try:
            with self._lock:
                response = self.session.request(method, url, headers=headers, data=data, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            raise PlatformUnreachable(f"Monitor platform unreachable at {self.base_url}: {e}") from e
        try:
            payload = response.json()
        except ValueError:
            payload = {"m2m:dbg": response.text}
        return response.status_code, payload


class PlatformClient:
    def __init__(self, transport, originator: str):
        self.transport = transport
        self.originator = originator

    def request(self, method: str, uri: str, body: Any = None, ty: Optional[int] = None) -> Tuple[int, Dict[str, Any]]:
        headers = {"X-M2M-Origin": self.originator, "Accept": "application/json"}
        if body is not None:
            headers["Content-Type"] = f"application/json;ty={ty}" if ty else "application/json"
        return self.transport.send(method, uri, headers, body)

    def _expect(self, status: int, body: Dict[str, Any], uri: str, ok=(200, 201)) -> Dict[str, Any]:
        if status not in ok:
            detail = body.get("m2m:dbg", body) if isinstance(body, dict) else body
            raise IngestError(f"{uri}: platform answered {status} ({detail})")
        return body

    def exists(self, path: str) -> bool:
        status, body = self.request("GET", path)
        if status == 404:
            return False
        self._expect(status, body, path)
        return True

    def latest(self, cnt_path: str) -> Optional[Dict[str, Any]]:
        """Attributes of the newest content instance, or None for a missing/empty container."""
        status, body = self.request("GET", f"{cnt_path}/la")
        if status in (404, 409):
            return None
        return self._expect(status, body, cnt_path)["m2m:cin"]

    def create_container(self, parent: str, rn: str, labels: Optional[List[str]] = None, mni: Optional[int] = None) -> str:
        spec: Dict[str, Any] = {"rn": rn, "lbl": list(labels or [])}
        if mni:
            spec["mni"] = mni
        status, body = self.request("POST", parent, {"m2m:cnt": spec}, ty=int(ResourceType.CNT))
        self._expect(status, body, parent, ok=(201,))
        return f"{parent}/{rn}"

    def insert_cin(self, cnt_path: str, con: str, labels: Optional[List[str]] = None) -> Dict[str, Any]:
        status, body = self.request(
            "POST", cnt_path, {"m2m:cin": {"con": con, "lbl": list(labels or []), "cnf": "text"}}, ty=int(ResourceType.CIN),
        )
        return self._expect(status, body, cnt_path, ok=(201,))["m2m:cin"]
