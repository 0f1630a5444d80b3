"""
Whole-platform wiring.

CityPlatform builds every service of one deployment from Settings:
resource tree + notification dispatcher (monitor), lake + intake, quality
pipeline (fed from the lake's post-store events) and the exchange. serve()
hosts the three HTTP apps in one process; close() flushes queues and
journals in dependency order.
"""
import asyncio
import socket
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import uvicorn

from core.campus import Campus, seed_tree
from core.tree import ResourceTree, utc_now
from exchange.app import create_exchange_app
from exchange.catalogue import Catalogue
from exchange.resource_server import ResourceServer
from exchange.tokens import RevocationTable, TokenService, TokenVerifier
from lake.app import create_lake_app
from lake.intake import LakeIntake
from lake.lake import DataLake, LakeEvent
from monitor.api import MonitorApi
from monitor.app import create_monitor_app
from monitor.notifications import NotificationDispatcher, http_sender
from orchestrator.orchestrator import build_pipeline
from quality.errors import QualityError
from quality.intake import raw_from_event
from utils.logging_setup import get_logger
from utils.settings import ConfigError, Settings

logger = get_logger("CityPlatform")


class CityPlatform:
    """
    One deployment: monitor, lake, quality pipeline and exchange.

    Args:
        settings: loaded Settings
        in_process: deliver notifications straight into the lake intake instead of over HTTP
        clock: clock of the resource tree (a ManualClock when replaying simulator streams)
        persist: keep state under settings.data_dir
    """

    def __init__(
        self,
        settings: Settings,
        campus: Optional[Campus] = None,
        in_process: bool = False,
        clock: Callable = utc_now,
        persist: bool = True,
        sender: Optional[Callable] = None,
    ):
        self.settings = settings
        self.campus = campus or Campus.load(settings.campus)
        data_dir = settings.data_dir if persist else None

        self.tree = ResourceTree(
            data_dir=data_dir,
            clock=clock,
            default_mni=settings.monitor.default_mni,
            snapshot_every=settings.monitor.snapshot_every,
            admin_origin=settings.monitor.admin_origin,
        )
        self.api = MonitorApi(self.tree)

        self.lake = DataLake(
            self.campus, data_dir=data_dir, verticals=settings.lake.verticals, utc_offset=settings.exchange.utc_offset,
        )
        self.intake = LakeIntake(self.lake, data_dir=data_dir)

        if sender is None:
            sender = self._local_sender if in_process else http_sender
        self.dispatcher = NotificationDispatcher(
            sender=sender,
            retry_backoff=settings.monitor.retry_backoff,
            ack_timeout=settings.monitor.ack_timeout,
            dead_letter_path=settings.data_path(settings.monitor.dead_letter_file) if persist else None,
        )
        self.dispatcher.attach(self.tree)

        self.pipeline = build_pipeline(
            settings,
            self.campus,
            store_path=settings.data_path("quality", "assessed.jsonl") if persist else None,
            announce=False,
        )
        if settings.quality.source == "lake":
            self.lake.add_listener(self._assess)

        self.catalogue = Catalogue(self.campus, settings.exchange.server_id)
        exchange = settings.exchange
        self.tokens = TokenService(
            self.catalogue,
            exchange.signing_secret,
            exchange.issuer,
            algorithm=exchange.algorithm,
            ttl=exchange.token_ttl,
            revocation_key=exchange.revocation_key,
            state_path=settings.data_path("exchange", "tokens.json") if persist else None,
        )
        self.revocations = RevocationTable(
            exchange.revocation_key,
            exchange.algorithm,
            path=settings.data_path("exchange", "revocations.json") if persist else None,
        )
        self.verifier = TokenVerifier(self.catalogue, exchange.signing_secret, self.revocations, exchange.algorithm)
        self.server = ResourceServer(
            self.catalogue,
            self.verifier,
            self.tree,
            self.lake,
            admin_origin=settings.monitor.admin_origin,
            page_size=exchange.page_size,
            max_span_days=exchange.max_span_days,
            utc_offset=exchange.utc_offset,
        )
        self._closed = False
        logger.info(f"[CityPlatform] READY | nodes={len(self.campus.nodes)} | persist={persist} | in_process={in_process}")

    # ------------------------------------------------------------------
    @property
    def lake_url(self) -> str:
        return f"http://{self.settings.lake.host}:{self.settings.lake.port}/notify"

    def _local_sender(self, url: str, notification: Dict[str, Any], timeout: float) -> int:
        return int(self.intake.receive(notification).get("status", 500))

    def _assess(self, event: LakeEvent) -> None:
        try:
            self.pipeline.process(raw_from_event(event, self.campus))
        except QualityError as e:
            logger.warning(f"[CityPlatform] QUALITY SKIP | node={event.node_id} | ts={event.ts} | reason={e.message}")

    def seed(self) -> Dict[str, int]:
        """Create the campus tree with the lake subscribed to every node's Data container."""
        return seed_tree(
            self.tree, self.campus, lake_nu=self.lake_url, subscription_name=self.settings.lake.subscription_name,
        )

    def flush(self) -> None:
        """Wait until every insert so far has been delivered, stored and assessed."""
        self.dispatcher.flush()
        self.intake.flush()

    # ------------------------------------------------------------------
    def apps(self) -> Dict[str, Any]:
        return {
            "monitor": create_monitor_app(self.api),
            "lake": create_lake_app(self.intake, self.settings.lake.allowlist),
            "exchange": create_exchange_app(self.server, self.tokens, self.catalogue, gzip=self.settings.exchange.gzip),
        }

    def _bindings(self) -> List[tuple]:
        s = self.settings
        return [
            ("monitor", s.monitor.host, s.monitor.port),
            ("lake", s.lake.host, s.lake.port),
            ("exchange", s.exchange.host, s.exchange.port),
        ]

    def check_ports(self) -> None:
        """
        Raises:
            ConfigError: a listen address is already taken
        """
        for name, host, port in self._bindings():
            with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
                try:
                    sock.bind((host, port))
                except OSError as e:
                    raise ConfigError(f"{name} cannot listen on {host}:{port}: {e.strerror or e}") from e

    async def serve(self) -> None:
        """Run the three HTTP services until interrupted, then close."""
        self.check_ports()
        apps = self.apps()
        servers = [
            uvicorn.Server(uvicorn.Config(apps[name], host=host, port=port, log_level="warning"))
            for name, host, port in self._bindings()
        ]
        for name, host, port in self._bindings():
            logger.info(f"[CityPlatform] SERVE | service={name} | url=http://{host}:{port}")
        try:
            await asyncio.gather(*(server.serve() for server in servers))
        finally:
            self.close()

    def run(self) -> None:
        asyncio.run(self.serve())

    def close(self) -> None:
        """Drain notification and intake queues, then snapshot the tree and export triples."""
        if self._closed:
            return
        self._closed = True
        self.dispatcher.flush()
        self.dispatcher.close()
        self.intake.flush()
        self.intake.close()
        self.tree.close()
        export = self.settings.quality.triples_export
        if export and len(self.pipeline.store):
            self.pipeline.store.export_triples(self.settings.data_path(*Path(export).parts))
        logger.info(
            f"[CityPlatform] CLOSED | delivered={self.dispatcher.stats['delivered']} "
            f"| stored={self.lake.stats['stored']} | assessed={len(self.pipeline.store)}"
        )
