"""
Embedded token service and resource-server token verification.

Consumers register, providers grant secure groups, and the token service
signs JWTs (HS256 by default) with the claims sub, iss, aud, iat, exp, iid,
role and cons. An open token names the resource server in iid and covers
every open group on it; a secure token names exactly one group.

Revocation: the token service sends a revoke request signed with the
revocation key; the resource server keeps the newest cutoff per subject and
rejects every token issued at or before it.
"""
import json
import threading
import time
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Set

import jwt

from exchange.catalogue import Catalogue
from exchange.errors import (
    BadQuery,
    Expired,
    InvalidToken,
    NoPolicy,
    NotCovered,
    NotRegistered,
    Revoked,
    Unauthenticated,
    UnknownItem,
    WrongAudience,
)
from utils.logging_setup import get_logger

logger = get_logger("Tokens")

RESOURCE_SERVER = "resource_server"
RESOURCE_GROUP = "resource_group"
CONSUMER = "consumer"
REVOKE_PURPOSE = "revoke"


class TokenService:
    def __init__(
        self,
        catalogue: Catalogue,
        secret: str,
        issuer: str,
        algorithm: str = "HS256",
        ttl: int = 3600,
        revocation_key: Optional[str] = None,
        state_path: Optional[Path] = None,
        clock: Callable[[], float] = time.time,
    ):
        if not secret:
            raise ValueError("Token service needs a signing secret")
        self.catalogue = catalogue
        self.secret = secret
        self.issuer = issuer
        self.algorithm = algorithm
        self.ttl = ttl
        self.revocation_key = revocation_key or secret
        self.state_path = Path(state_path) if state_path else None
        self.clock = clock
        self.consumers: Set[str] = set()
        self.grants: Dict[str, Set[str]] = {}
        self._load()

    # ------------------------------------------------------------------
    def _load(self) -> None:
        if not self.state_path or not self.state_path.exists():
            return
        raw = json.loads(self.state_path.read_text(encoding='utf-8') or "{}")
        self.consumers = set(raw.get("consumers") or [])
        self.grants = {user: set(groups) for user, groups in (raw.get("grants") or {}).items()}

    def _save(self) -> None:
        if not self.state_path:
            return
        self.state_path.parent.mkdir(parents=True, exist_ok=True)
        self.state_path.write_text(json.dumps({
            "consumers": sorted(self.consumers),
            "grants": {u: sorted(g) for u, g in sorted(self.grants.items())},
        }, indent=2), encoding='utf-8')

    # ------------------------------------------------------------------
    def register(self, user: str) -> None:
        self.consumers.add(user)
        self._save()
        logger.info(f"[Tokens] REGISTER | user={user}")

    def grant(self, user: str, group_id: str) -> None:
        """Provider policy: let a registered consumer fetch tokens for a secure group."""
        if user not in self.consumers:
            raise NotRegistered(f"{user} is not a registered consumer")
        group = self.catalogue.group_for(group_id)
        if group is None:
            raise UnknownItem(f"No resource group {group_id}")
        self.grants.setdefault(user, set()).add(group_id)
        self._save()
        logger.info(f"[Tokens] GRANT | user={user} | group={group.name}")

    def issue(self, user: str, item_id: str, item_type: str, role: str = CONSUMER) -> str:
        """
        Sign a token for an item.

        Raises:
            NotRegistered: unknown consumer
            UnknownItem: the item is neither this server nor one of its groups
            NoPolicy: a secure group without a provider grant
        """
        if user not in self.consumers:
            raise NotRegistered(f"{user} is not a registered consumer")
        if role != CONSUMER:
            raise BadQuery(f"Unsupported role {role!r}")

        if item_type == RESOURCE_SERVER:
            if item_id != self.catalogue.server_id:
                raise UnknownItem(f"Unknown resource server {item_id}")
        elif item_type == RESOURCE_GROUP:
            group = self.catalogue.group_for(item_id)
            if group is None:
                raise UnknownItem(f"No resource group {item_id}")
            if not group.is_open and item_id not in self.grants.get(user, set()):
                raise NoPolicy(f"No policy grants {user} access to {group.name}")
        else:
            raise BadQuery(f"Unsupported itemType {item_type!r}")

        iat = int(self.clock())
        claims = {
            "sub": user,
            "iss": self.issuer,
            "aud": self.catalogue.server_id,
            "iat": iat,
            "exp": iat + self.ttl,
            "iid": item_id,
            "role": role,
            "cons": {},
        }
        logger.info(f"[Tokens] ISSUE | user={user} | iid={item_id} | exp={claims['exp']}")
        return jwt.encode(claims, self.secret, algorithm=self.algorithm)

    def revoke_request(self, user: str) -> str:
        """The signed notice the token service sends to the resource server."""
        return jwt.encode(
            {"sub": user, "iat": int(self.clock()), "purpose": REVOKE_PURPOSE},
            self.revocation_key, algorithm=self.algorithm,
        )


class RevocationTable:
    """Newest revocation cutoff per subject."""

    def __init__(self, key: str, algorithm: str = "HS256", path: Optional[Path] = None):
        self.key = key
        self.algorithm = algorithm
        self.path = Path(path) if path else None
        self._cutoffs: Dict[str, int] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            self._cutoffs = {k: int(v) for k, v in json.loads(self.path.read_text(encoding='utf-8') or "{}").items()}

    def revoke(self, user: str, at: int) -> int:
        with self._lock:
            cutoff = max(self._cutoffs.get(user, at), int(at))
            self._cutoffs[user] = cutoff
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(json.dumps(self._cutoffs, sort_keys=True), encoding='utf-8')
        logger.info(f"[Tokens] REVOKE | user={user} | cutoff={cutoff}")
        return cutoff

    def apply(self, request_token: str) -> Dict[str, Any]:
        """
        Verify a signed revoke request and store its cutoff.

        Raises:
            Unauthenticated: the request was not signed with the revocation key
        """
        try:
            claims = jwt.decode(request_token, self.key, algorithms=[self.algorithm], options={"verify_exp": False})
        except jwt.PyJWTError as e:
            raise Unauthenticated(f"Revoke request rejected: {e}") from e
        if claims.get("purpose") != REVOKE_PURPOSE or "sub" not in claims or "iat" not in claims:
            raise Unauthenticated("Revoke request is missing sub, iat or purpose")
        cutoff = self.revoke(claims["sub"], int(claims["iat"]))
        return {"sub": claims["sub"], "cutoff": cutoff}

    def cutoff(self, user: str) -> Optional[int]:
        with self._lock:
            return self._cutoffs.get(user)


class TokenVerifier:
    def __init__(self, catalogue: Catalogue, secret: str, revocations: RevocationTable, algorithm: str = "HS256"):
        self.catalogue = catalogue
        self.secret = secret
        self.algorithm = algorithm
        self.revocations = revocations

    def verify(self, token: Optional[str], resource_id: str, now: float) -> Dict[str, Any]:
        """
        Check, in order: signature, expiry, audience, coverage, revocation.

        Raises:
            InvalidToken (or Expired, WrongAudience, NotCovered, Revoked)
        """
        if not token:
            raise InvalidToken("No token supplied")
        try:
            claims = jwt.decode(
                token, self.secret, algorithms=[self.algorithm],
                options={"verify_exp": False, "verify_aud": False, "verify_iat": False},
            )
        except jwt.PyJWTError as e:
            raise InvalidToken(f"Token rejected: {e}") from e
        for claim in ("sub", "aud", "iat", "exp", "iid"):
            if claim not in claims:
                raise InvalidToken(f"Token has no {claim} claim")

        if int(claims["exp"]) <= now:
            raise Expired(f"Token for {claims['sub']} expired at {claims['exp']}")
        if claims["aud"] != self.catalogue.server_id:
            raise WrongAudience(f"Token audience {claims['aud']} is not this server")

        group, _ = self.catalogue.resolve(resource_id)
        group_id = self.catalogue.group_id(group.name)
        if claims["iid"] == self.catalogue.server_id:
            if not group.is_open:
                raise NotCovered(f"Open token cannot reach secure group {group.name}")
        elif claims["iid"] != group_id:
            raise NotCovered(f"Token for {claims['iid']} does not cover {group.name}")

        cutoff = self.revocations.cutoff(claims["sub"])
        if cutoff is not None and int(claims["iat"]) <= cutoff:
            raise Revoked(f"Token for {claims['sub']} issued at {claims['iat']}, revoked at {cutoff}")
        return claims
