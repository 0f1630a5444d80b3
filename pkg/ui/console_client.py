"""
CityOps command line.

One entry point for every service and helper:

    python -m ui.console_client serve
    python -m ui.console_client simulate aq --duration 3600 --in-process
    python -m ui.console_client report AQ-KH00-00 --json

Exit codes: 0 success, 1 the operation failed (API error body, failed
scenario, unreachable platform), 2 bad usage or configuration.
"""
import argparse
import dataclasses
import json
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import requests

from agents.report_agent import ReportAgent
from core.campus import Campus, seed_tree
from core.tree import ResourceTree
from exchange.catalogue import Catalogue
from exchange.errors import ExchangeError
from exchange.tokens import RESOURCE_GROUP, RESOURCE_SERVER, TokenService
from ingest.charger import ChargePoint, TariffTable, run_scenarios
from ingest.errors import IngestError
from ingest.pdu import EnergyReading, decode_pdu, encode_pdu, split_pdu
from ingest.platform_client import HttpTransport, LocalTransport, PlatformClient
from ingest.radio import rssi_summary
from ingest.simulator import (
    FaultPlan,
    ground_truth_tally,
    load_profiles,
    post_stream,
    read_ground_truth,
    simulate,
    write_ground_truth,
)
from lake.intake import DEAD_LETTERS, INTAKE_JOURNAL, LakeIntake
from lake.lake import DataLake
from monitor.api import MonitorApi
from orchestrator.orchestrator import build_pipeline
from orchestrator.runtime import CityPlatform
from quality.errors import QualityError
from quality.intake import journal_source, raw_from_sim
from quality.store import AssessedStore
from utils.clock import ManualClock
from utils.journal import Journal
from utils.logging_setup import configure_logging, get_logger
from utils.settings import ConfigError, Settings, load_settings

logger = get_logger("ConsoleClient")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

ROOT_PATH = "/in-cse/in-name"
COMPARED = ("unique", "duplicate_distribution", "transmission_delays", "time_delays", "out_of_range")


class CommandFailed(Exception):
    """The command ran but the operation failed; `body` is printed as-is."""

    def __init__(self, body: Any, code: int = EXIT_FAILED):
        super().__init__(str(body))
        self.body = body
        self.code = code


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------
def _epoch(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None
    if value.lstrip("-").isdigit():
        return int(value)
    try:
        return int(datetime.fromisoformat(value.replace("Z", "+00:00")).timestamp())
    except ValueError as e:
        raise ConfigError(f"Not an epoch or ISO time: {value!r}") from e


def _exchange_url(settings: Settings, url: Optional[str]) -> str:
    return (url or f"http://{settings.exchange.host}:{settings.exchange.port}").rstrip("/")


def _call(method: str, url: str, **kwargs) -> Dict[str, Any]:
    try:
        response = requests.request(method, url, timeout=10, **kwargs)
    except (requests.ConnectionError, requests.Timeout) as e:
        raise CommandFailed({"error": "Unreachable", "detail": str(e)})
    try:
        body = response.json()
    except ValueError:
        body = {"detail": response.text}
    if response.status_code >= 400:
        raise CommandFailed(body)
    return body


def _campus(settings: Settings) -> Campus:
    return Campus.load(settings.campus)


def _lines(values: List[str], path: Optional[str]) -> List[str]:
    lines = list(values or [])
    if path:
        lines += Path(path).read_text(encoding="utf-8").splitlines()
    return [l.strip() for l in lines if l.strip() and not l.strip().startswith("#")]


# ----------------------------------------------------------------------
# verbs
# ----------------------------------------------------------------------
def cmd_serve(args, settings: Settings):
    platform = CityPlatform(settings)
    summary = platform.seed()
    logger.info(f"[ConsoleClient] SEEDED | created={summary['created']} | skipped={summary['skipped']}")
    platform.run()
    return {
        "status": "stopped",
        "monitor": dict(platform.dispatcher.stats),
        "lake": dict(platform.lake.stats),
        "quality": dict(platform.pipeline.stats),
    }, None


def cmd_seed(args, settings: Settings):
    platform = CityPlatform(settings)
    try:
        summary = platform.seed()
    finally:
        platform.close()
    return summary, f"Seeded campus tree: {summary['created']} created, {summary['skipped']} already present"


def cmd_decode_pdu(args, settings: Settings):
    decoded = []
    text = []
    for line in _lines(args.hex, args.file):
        reading = decode_pdu(line)
        decoded.append({k: str(v) for k, v in reading.as_dict().items()})
        text.append("\n".join(
            f"  {name:<12} {chunk:<10} {getattr(reading, name)}" for name, chunk in split_pdu(line)
        ))
    if not decoded:
        raise ConfigError("decode-pdu needs a hex payload or --file")
    return decoded, "\n\n".join(text)


def cmd_encode_pdu(args, settings: Settings):
    values = {}
    if args.values:
        try:
            values.update(json.loads(Path(args.values).read_text(encoding="utf-8")))
        except ValueError as e:
            raise ConfigError(f"{args.values} is not a JSON object of field values: {e}") from e
    for pair in args.field or []:
        name, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"--field needs name=value, got {pair!r}")
        values[name.strip()] = value.strip()
    try:
        reading = EnergyReading.from_mapping(values)
    except (ValueError, ArithmeticError) as e:
        raise ConfigError(str(e)) from e
    encoded = encode_pdu(reading)
    return {"hex": encoded}, encoded


def cmd_simulate(args, settings: Settings):
    profiles = load_profiles(settings.profiles)
    if args.profile not in profiles:
        raise ConfigError(f"Unknown profile {args.profile!r}; known: {sorted(profiles)}")
    profile = profiles[args.profile]
    if args.clean:
        profile = dataclasses.replace(profile, faults=FaultPlan())
    campus = _campus(settings)
    node = campus.find(profile.node_id)
    if node is None:
        raise ConfigError(f"Profile {profile.name} drives unknown node {profile.node_id}")

    seed = settings.seed if args.seed is None else args.seed
    records = simulate(profile, node.model, args.duration, seed=seed)
    out = Path(args.out) if args.out else settings.data_path("simulator", f"{profile.name}-{seed}.jsonl")
    write_ground_truth(records, out)
    result: Dict[str, Any] = {"profile": profile.name, "node": node.node_id, "records": len(records), "ground_truth": str(out)}

    if args.dry_run:
        return result, f"Wrote {len(records)} records of ground truth to {out}"

    if args.in_process:
        clock = ManualClock()
        platform = CityPlatform(settings, campus=campus, in_process=True, clock=clock, persist=False)
        try:
            platform.seed()
            client = PlatformClient(LocalTransport(platform.api), settings.monitor.admin_origin)
            result["posted"] = post_stream(records, client, node, platform.tree.root.path, clock=clock)
            platform.flush()
            result["report"] = platform.pipeline.report(node.node_id) if records else None
        finally:
            platform.close()
        if records:
            truth = ground_truth_tally(records, profile.period, node.model)
            result["matches_ground_truth"] = all(result["report"][k] == truth[k] for k in COMPARED)
    else:
        base = args.url or f"http://{settings.monitor.host}:{settings.monitor.port}"
        client = PlatformClient(HttpTransport(base), settings.monitor.admin_origin)
        result["posted"] = post_stream(records, client, node, ROOT_PATH)

    return result, f"Posted {result['posted']} records for {node.node_id}; ground truth at {out}"


def _render_report(report: Dict[str, Any]) -> str:
    lines = [
        f"Node {report['node']} ({report['feature_of_interest']})",
        f"  unique observations : {report['unique']}",
        f"  received / fed      : {report['totals']['received']} / {report['totals']['fed']}",
        f"  clock skew          : {report['clock_skew']}",
        "  received n times    : " + ", ".join(f"{k}x={v}" for k, v in report["duplicate_distribution"].items()),
    ]
    for label, key in (("transmission delay", "transmission_histogram"), ("sampling delay", "time_delay_histogram")):
        lines.append(f"  {label} histogram (bin {report['histogram_bin']} s):")
        lines += [f"    [{b['start']:>7.1f}, {b['end']:>7.1f})  {b['count']}" for b in report[key]]
    lines.append("  out of range:")
    lines += [f"    {prop:<22} in={c['in']} out={c['out']}" for prop, c in report["ranges"].items()]
    return "\n".join(lines)


def cmd_report(args, settings: Settings):
    start, end = _epoch(args.start), _epoch(args.end)
    campus = _campus(settings)

    if args.ground_truth:
        node = campus.find(args.node)
        if node is None:
            raise ConfigError(f"Unknown node {args.node}")
        records = read_ground_truth(Path(args.ground_truth))
        pipeline = build_pipeline(settings, campus, announce=False)
        pipeline.run(raw_from_sim(r, node) for r in records)
        report = pipeline.report(args.node, start, end)
        if args.profile:
            period = load_profiles(settings.profiles)[args.profile].period
            truth = ground_truth_tally(records, period, node.model)
            report["matches_ground_truth"] = all(report[k] == truth[k] for k in COMPARED)
        store = pipeline.store
    elif args.from_journal:
        pipeline = build_pipeline(settings, campus, announce=False)
        pipeline.run(journal_source(settings.data_dir / "lake" / INTAKE_JOURNAL, campus))
        report = pipeline.report(args.node, start, end)
        store = pipeline.store
    else:
        path = settings.data_dir / "quality" / "assessed.jsonl"
        if not path.exists():
            raise CommandFailed({"error": "NoData", "detail": f"No assessed store at {path}"})
        store = AssessedStore(path)
        report = ReportAgent("ReportAgent", store, settings.quality.histogram_bin).run(
            {"node": args.node, "start": start, "end": end}
        )

    if args.triples:
        report["triples"] = store.export_triples(Path(args.triples))
    return report, _render_report(report)


def cmd_query(args, settings: Settings):
    base = _exchange_url(settings, args.url)
    headers = {"token": args.token} if args.token else {}
    if args.what == "latest":
        body = _call("GET", f"{base}/entities/latest", params={"id": args.id}, headers=headers)
    elif args.what == "meta":
        body = _call("GET", f"{base}/meta", params={"id": args.id}, headers=headers)
    else:
        params = {"id": args.id, "timerel": args.timerel, "time": args.time, "offset": args.offset}
        if args.end_time:
            params["endTime"] = args.end_time
        if args.attrs:
            params["attrs"] = args.attrs
        if args.q:
            params["q"] = args.q
        body = _call("GET", f"{base}/temporal/entities", params=params, headers=headers)
    return body, json.dumps(body, indent=2, ensure_ascii=False)


def cmd_token(args, settings: Settings):
    base = _exchange_url(settings, args.url)
    if args.action == "register":
        body = _call("POST", f"{base}/consumers", json={"userId": args.user})
    elif args.action == "grant":
        body = _call("POST", f"{base}/grants", json={"userId": args.user, "groupId": args.item})
    elif args.action == "issue":
        item_type = args.type or (RESOURCE_SERVER if args.item == settings.exchange.server_id else RESOURCE_GROUP)
        body = _call(
            "POST", f"{base}/token",
            json={"itemId": args.item, "itemType": item_type}, headers={"x-consumer-id": args.user},
        )
        return body, body["results"]["accessToken"]
    else:
        exchange = settings.exchange
        signer = TokenService(
            Catalogue(_campus(settings), exchange.server_id), exchange.signing_secret, exchange.issuer,
            algorithm=exchange.algorithm, revocation_key=exchange.revocation_key,
        )
        body = _call("POST", f"{base}/revoke", json={"request": signer.revoke_request(args.user)})
    return body, json.dumps(body, indent=2)


def cmd_lake(args, settings: Settings):
    if args.action == "dead-letters":
        records = list(Journal(settings.data_dir / "lake" / DEAD_LETTERS).replay())
        text = "\n".join(f"  [{r.get('stage')}] {r.get('error')}" for r in records) or "  (none)"
        return records, f"{len(records)} dead-lettered notification(s)\n{text}"

    campus = _campus(settings)
    lake = DataLake(
        campus, data_dir=Path(args.into) if args.into else None,
        verticals=settings.lake.verticals, utc_offset=settings.exchange.utc_offset,
    )
    intake = LakeIntake(lake, data_dir=Path(args.into) if args.into else None)
    outcome = intake.replay(Journal(settings.data_dir / "lake" / INTAKE_JOURNAL))
    result: Dict[str, Any] = {k: int(v) for k, v in sorted(outcome.items())}
    if args.dump:
        result["dumps"] = {tenant: store.dump() for tenant, store in sorted(lake.stores.items()) if store.count()}
    text = ", ".join(f"{k}={v}" for k, v in result.items() if k != "dumps")
    return result, f"Replayed intake journal: {text}"


def cmd_charger(args, settings: Settings):
    clock = ManualClock()
    tree = ResourceTree(clock=clock, admin_origin=settings.monitor.admin_origin)
    seed_tree(tree, _campus(settings))
    point = ChargePoint(
        PlatformClient(LocalTransport(MonitorApi(tree)), settings.monitor.admin_origin),
        TariffTable.load(settings.tariffs),
        clock=clock,
    )
    results = run_scenarios(point, Path(args.scenarios), clock.set)
    failed = [r["name"] for r in results if not r["passed"]]
    text = "\n".join(
        f"  {'✓' if r['passed'] else '✗'} {r['name']}: "
        + ", ".join(f"{k}={v}" for k, v in r.items() if k not in ("name", "passed"))
        for r in results
    )
    if failed:
        raise CommandFailed({"scenarios": results, "failed": failed})
    return results, text


def cmd_rssi(args, settings: Settings):
    readings = [float(v) for v in _lines(args.values, args.file)]
    summary = rssi_summary(readings)
    counts = ", ".join(f"{k}={v}" for k, v in summary["counts"].items())
    return summary, f"{summary['total']} reading(s): {counts}; ideal share {summary['ideal_share']:.2%}"


def cmd_catalogue(args, settings: Settings):
    catalogue = Catalogue(_campus(settings), settings.exchange.server_id)
    if args.id:
        body = catalogue.lookup(args.id)
    else:
        body = catalogue.groups()
    return body, json.dumps(body, indent=2, ensure_ascii=False)


COMMANDS = {
    "serve": cmd_serve,
    "seed": cmd_seed,
    "decode-pdu": cmd_decode_pdu,
    "encode-pdu": cmd_encode_pdu,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "query": cmd_query,
    "token": cmd_token,
    "lake": cmd_lake,
    "charger": cmd_charger,
    "rssi": cmd_rssi,
    "catalogue": cmd_catalogue,
}


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cityops", description="CityOps smart-campus telemetry platform")
    parser.add_argument("--config", help="settings.yaml (default config/settings.yaml)")
    parser.add_argument("--data-dir", help="override paths.data_dir")
    parser.add_argument("--log-level", help="override runtime.log_level")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("serve", help="run monitor, lake, exchange and the quality pipeline")
    sub.add_parser("seed", help="create the campus tree in the data dir (idempotent)")

    p = sub.add_parser("decode-pdu", help="decode energy meter payloads")
    p.add_argument("hex", nargs="*")
    p.add_argument("--file")

    p = sub.add_parser("encode-pdu", help="encode an energy reading")
    p.add_argument("--field", action="append", help="name=value, e.g. r_current=1.152")
    p.add_argument("--values", help="JSON file of field values")

    p = sub.add_parser("simulate", help="run a simulator profile and post the stream")
    p.add_argument("profile")
    p.add_argument("--duration", type=int, default=3600, help="seconds of operation")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="ground-truth log path")
    p.add_argument("--url", help="monitor base URL")
    p.add_argument("--in-process", action="store_true", help="run a throwaway platform in this process")
    p.add_argument("--dry-run", action="store_true", help="only write the ground-truth log")
    p.add_argument("--clean", action="store_true", help="ignore the profile's fault plan")

    p = sub.add_parser("report", help="quality report of one node")
    p.add_argument("node")
    p.add_argument("--start", help="epoch seconds or ISO time (inclusive)")
    p.add_argument("--end", help="epoch seconds or ISO time (exclusive)")
    p.add_argument("--from-journal", action="store_true", help="rebuild from the lake intake journal")
    p.add_argument("--ground-truth", help="assess a simulator ground-truth log")
    p.add_argument("--profile", help="profile of the ground-truth log, to compare against it")
    p.add_argument("--triples", help="also export N-Triples to this path")

    p = sub.add_parser("query", help="call the exchange API")
    p.add_argument("what", choices=["latest", "meta", "temporal"])
    p.add_argument("id")
    p.add_argument("--token")
    p.add_argument("--url", help="exchange base URL")
    p.add_argument("--timerel", default="during", choices=["during", "before", "after"])
    p.add_argument("--time")
    p.add_argument("--end-time")
    p.add_argument("--attrs")
    p.add_argument("--q")
    p.add_argument("--offset", type=int, default=0)

    p = sub.add_parser("token", help="consumer registration, grants, tokens and revocation")
    p.add_argument("action", choices=["register", "grant", "issue", "revoke"])
    p.add_argument("user")
    p.add_argument("item", nargs="?", help="item or group id (grant, issue)")
    p.add_argument("--type", choices=[RESOURCE_SERVER, RESOURCE_GROUP])
    p.add_argument("--url", help="exchange base URL")

    p = sub.add_parser("lake", help="lake maintenance")
    p.add_argument("action", choices=["replay", "dead-letters"])
    p.add_argument("--into", help="replay into a lake under this directory (default: in memory)")
    p.add_argument("--dump", action="store_true", help="include canonical tenant dumps")

    p = sub.add_parser("charger", help="run scripted charge-point scenarios")
    p.add_argument("scenarios", nargs="?", default="data/charger_scenarios.yaml")

    p = sub.add_parser("rssi", help="classify RSSI readings (dBm)")
    p.add_argument("values", nargs="*")
    p.add_argument("--file")

    p = sub.add_parser("catalogue", help="catalogue groups or one item")
    p.add_argument("--id")
    return parser


def _validate(args, parser: argparse.ArgumentParser) -> None:
    if args.command == "query" and args.what == "temporal" and not args.time:
        parser.error("query temporal needs --time")
    if args.command == "token" and args.action in ("grant", "issue") and not args.item:
        parser.error(f"token {args.action} needs an item id")


def run(argv: Optional[List[str]] = None, test_mode: bool = False) -> Tuple[int, Any]:
    """
    Parse and execute one command.

    Args:
        argv: arguments without the program name
        test_mode: If True, suppress console printing and return the payload.

    Returns:
        (exit code, payload)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args, parser)
    except SystemExit as e:
        return int(e.code or 0), None

    overrides = {k: v for k, v in (("data_dir", args.data_dir), ("log_level", args.log_level)) if v}
    try:
        settings = load_settings(args.config, overrides)
        configure_logging(str(settings.log_dir), settings.log_level)
        if args.command == "charger" and not Path(args.scenarios).is_absolute():
            args.scenarios = str(settings.base_dir / args.scenarios)
        payload, text = COMMANDS[args.command](args, settings)
        code = EXIT_OK
    except (ConfigError, FileNotFoundError) as e:
        payload, text, code = {"error": "ConfigError", "detail": str(e)}, f"Configuration error: {e}", EXIT_USAGE
    except CommandFailed as e:
        payload, text, code = e.body, json.dumps(e.body, indent=2, ensure_ascii=False, default=str), e.code
    except (IngestError, QualityError, ExchangeError) as e:
        payload = {"error": type(e).__name__, "detail": e.message}
        text, code = f"{type(e).__name__}: {e.message}", EXIT_FAILED

    if not test_mode:
        if args.json or text is None:
            print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, default=str))
        else:
            print("\n" + "="*60)
            print(f"🎯 {args.command}")
            print("="*60)
            print(text)
            print("="*60 + "\n")
    return code, payload


def main(argv: Optional[List[str]] = None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
