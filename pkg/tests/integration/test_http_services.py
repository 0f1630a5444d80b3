import shutil
import tempfile
import unittest
from datetime import datetime, timezone
from pathlib import Path

from fastapi.testclient import TestClient

from orchestrator.runtime import CityPlatform
from utils.clock import ManualClock
from utils.settings import load_settings

ADMIN = "admin:admin"
GUEST = "guest:guest"
NODE = "AQ-AN00-00"
TS = 1641925800
CON = f"[{TS}, 35.2, 61.0, 28.1, 54.3, 0.81, 0.03, 0.21, 98.20, 1, 0, 15]"


class TestHttpServices(unittest.TestCase):
    """Monitor, lake and exchange apps wired together over HTTP test clients."""

    def setUp(self):
        self.data_dir = Path(tempfile.mkdtemp())
        settings = load_settings(None, {"data_dir": str(self.data_dir)})
        self.clients = {}
        clock = ManualClock(datetime.fromtimestamp(TS + 12, timezone.utc))
        self.platform = CityPlatform(settings, clock=clock, sender=self.post_to_lake)
        self.platform.seed()
        self.clients.update({name: TestClient(app) for name, app in self.platform.apps().items()})
        self.node = self.platform.campus.find(NODE)
        self.data_path = self.node.data_path(self.platform.tree.root.path)
        self.item = self.platform.catalogue.item_id(self.node)

    def tearDown(self):
        self.platform.close()
        shutil.rmtree(self.data_dir, ignore_errors=True)

    def post_to_lake(self, url, notification, timeout):
        return self.clients["lake"].post("/notify", json=notification).status_code

    def insert(self, origin=ADMIN):
        return self.clients["monitor"].post(
            f"/~{self.data_path}",
            json={"m2m:cin": {"con": CON, "lbl": self.node.cin_labels()}},
            headers={"X-M2M-Origin": origin},
        )

    def consumer_token(self, user="consumer-1"):
        exchange = self.clients["exchange"]
        self.assertEqual(exchange.post("/consumers", json={"userId": user}).status_code, 200)
        issued = exchange.post(
            "/token", json={"itemId": self.platform.settings.exchange.server_id, "itemType": "resource_server"},
            headers={"x-consumer-id": user},
        )
        self.assertEqual(issued.status_code, 200)
        return issued.json()["results"]["accessToken"]

    def test_insert_flows_to_lake_quality_and_exchange(self):
        created = self.insert()
        self.assertEqual(created.status_code, 201)
        self.platform.flush()

        self.assertEqual(self.platform.dispatcher.stats["delivered"], 1)
        self.assertEqual(self.platform.lake.stats["stored"], 1)
        report = self.platform.pipeline.report(NODE)
        self.assertEqual(report["unique"], 1)
        self.assertEqual(report["transmission_delays"], [12])

        health = self.clients["lake"].get("/health").json()
        self.assertEqual(health["stats"]["stored"], 1)

        token = self.consumer_token()
        latest = self.clients["exchange"].get("/entities/latest", params={"id": self.item}, headers={"token": token})
        self.assertEqual(latest.status_code, 200)
        record = latest.json()["results"][0]
        self.assertEqual(record["pm2p5"], {"instValue": 35.2})
        self.assertEqual(record["observationDateTime"], "2022-01-12T00:00:00+05:30")

        temporal = self.clients["exchange"].get("/temporal/entities", params={
            "id": self.item, "timerel": "during",
            "time": "2022-01-11T18:00:00Z", "endTime": "2022-01-11T19:00:00Z",
        }, headers={"token": token})
        self.assertEqual(temporal.status_code, 200)
        self.assertEqual(temporal.json()["totalHits"], 1)

    def test_guest_reads_but_cannot_insert(self):
        self.assertEqual(self.insert(origin=GUEST).status_code, 403)
        self.assertEqual(self.insert().status_code, 201)
        monitor = self.clients["monitor"]
        latest = monitor.get(f"/~{self.data_path}/la", headers={"X-M2M-Origin": GUEST})
        self.assertEqual(latest.status_code, 200)
        self.assertEqual(latest.json()["m2m:cin"]["con"], CON)
        found = monitor.get("/~/in-cse/in-name", params={"fu": "1", "lbl": "PM2.5"}, headers={"X-M2M-Origin": GUEST})
        self.assertIn(self.data_path, found.json()["m2m:uril"])

    def test_revoked_token_is_refused(self):
        self.insert()
        self.platform.flush()
        token = self.consumer_token("consumer-2")
        exchange = self.clients["exchange"]
        revoked = exchange.post("/revoke", json={"request": self.platform.tokens.revoke_request("consumer-2")})
        self.assertEqual(revoked.status_code, 200)
        refused = exchange.get("/entities/latest", params={"id": self.item}, headers={"token": token})
        self.assertEqual(refused.status_code, 401)


if __name__ == "__main__":
    unittest.main()
