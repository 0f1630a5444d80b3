"""
Directional ingest benchmark: one shared store against one store per tenant.

Every write holds its store's lock for `write_latency` seconds. The shared
store serialises all tenants behind one lock; per-tenant stores let tenants
write in parallel. Only the ordering of the two throughputs is meaningful.
"""
import threading
import time
from typing import Any, Dict, List, Tuple

from core.campus import Campus, CampusNode
from lake.store import TenantStore
from utils.logging_setup import get_logger

logger = get_logger("LakeBenchmark")


def _workload(campus: Campus, tenants: List[str], rows_per_tenant: int, start: int) -> Dict[str, List[Tuple[CampusNode, int]]]:
    work: Dict[str, List[Tuple[CampusNode, int]]] = {}
    for tenant in tenants:
        nodes = [n for n in campus.nodes.values() if n.model.vertical == tenant]
        if not nodes:
            continue
        work[tenant] = [(nodes[i % len(nodes)], start + i) for i in range(rows_per_tenant)]
    return work


def _fill(store: TenantStore, jobs: List[Tuple[CampusNode, int]]) -> None:
    for node, ts in jobs:
        store.store_observation(node, node.current_version, {node.model.timestamp.name: ts}, ts)


def _timed(threads: List[threading.Thread]) -> float:
    began = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return time.perf_counter() - began


def run_benchmark(
    campus: Campus, tenants: List[str], rows_per_tenant: int = 20,
    write_latency: float = 0.002, start: int = 1641925800,
) -> Dict[str, Any]:
    """
    Returns:
        dict: rows, seconds and rows/s for the "single" and "per_tenant" layouts
    """
    work = _workload(campus, tenants, rows_per_tenant, start)
    total = sum(len(jobs) for jobs in work.values())

    shared = TenantStore("ALL", None, write_delay=write_latency)
    single = _timed([threading.Thread(target=_fill, args=(shared, jobs)) for jobs in work.values()])

    stores = {tenant: TenantStore(tenant, None, write_delay=write_latency) for tenant in work}
    per_tenant = _timed([threading.Thread(target=_fill, args=(stores[t], jobs)) for t, jobs in work.items()])

    result = {
        "tenants": sorted(work),
        "rows": total,
        "single": {"seconds": round(single, 4), "throughput": round(total / single, 1) if single else 0.0},
        "per_tenant": {"seconds": round(per_tenant, 4), "throughput": round(total / per_tenant, 1) if per_tenant else 0.0},
    }
    logger.info(
        f"[LakeBenchmark] RESULT | rows={total} | single={result['single']['throughput']}/s | "
        f"per_tenant={result['per_tenant']['throughput']}/s"
    )
    return result
