import math
from collections import Counter, defaultdict

import numpy as np

from agents.base_agent import BaseAgent
from quality.errors import NoData


class ReportAgent(BaseAgent):
    """
    ReportAgent summarises the assessed store for one node.

    This agent is responsible ONLY for:
    - Counting how many times each unique observation was received
    - Listing transmission and sampling delays with fixed-width histograms
    - Counting in/out-of-range observations per property
    - Recording conservation totals and clock-skew occurrences

    It never re-assesses: every number comes from stored assessment results.
    """

    def __init__(self, name, store, histogram_bin=5.0):
        """
        Args:
            name (str): Agent name for logging
            store (AssessedStore): store written by the storage layer
            histogram_bin (float): delay histogram bin width in seconds
        """
        super().__init__(name)
        self.store = store
        self.histogram_bin = float(histogram_bin)

    def run(self, request):
        """
        Build the quality report of one node.

        Args:
            request (dict): "node" plus optional "start"/"end" epoch bounds of the result time

        Returns:
            dict: duplicate distribution, delays, histograms, range counts and totals

        Raises:
            NoData: nothing assessed for the node in the window
        """
        node = request["node"]
        start, end = request.get("start"), request.get("end")
        self.log(f"Building quality report for {node}...")

        rows = self.store.observations(node, start, end)
        if not rows:
            raise NoData(f"No assessed observations for {node} in the window")

        by_time = defaultdict(list)
        for row in rows:
            by_time[row["resultTime"]].append(row)

        received = {}
        transmission = []
        time_delays = []
        for t_new in sorted(by_time):
            group = by_time[t_new]
            received[t_new] = max(max(int(r["numOfDuplicates"]), 1) for r in group)
            accepted = [r for r in group if "value" in r]
            if not accepted:
                continue
            delays = [r for r in accepted if "transmissionDelay" in r]
            if delays:
                transmission.append(int(delays[0]["transmissionDelay"]))
                time_delays.append(max(int(r["timeDelay"]) for r in delays))

        ranges = defaultdict(Counter)
        for row in rows:
            if "isOutOfRange" in row:
                ranges[row["property"]]["out" if row["isOutOfRange"] else "in"] += 1

        fed = self.store.fed.get(node, 0)
        total_received = sum(received.values())
        report = {
            "node": node,
            "feature_of_interest": rows[0]["foi"],
            "window": {"start": start, "end": end},
            "unique": sum(1 for t in by_time if any("value" in r for r in by_time[t])),
            "duplicate_distribution": dict(sorted(Counter(received.values()).items())),
            "transmission_delays": transmission,
            "time_delays": time_delays,
            "histogram_bin": self.histogram_bin,
            "transmission_histogram": self._histogram(transmission),
            "time_delay_histogram": self._histogram(time_delays),
            "ranges": {prop: {"in": c["in"], "out": c["out"]} for prop, c in sorted(ranges.items())},
            "out_of_range": {prop: c["out"] for prop, c in sorted(ranges.items()) if c["out"]},
            "clock_skew": sum(1 for d in transmission if d < 0),
            "totals": {
                "fed": fed,
                "received": total_received,
                "conserved": fed == total_received if start is None and end is None else None,
            },
        }
        self.log(
            f"Report for {node}: unique={report['unique']} | received={total_received} | fed={fed} "
            f"| skew={report['clock_skew']}"
        )
        return report

    def _histogram(self, values):
        """Fixed-width bins aligned to multiples of the bin width."""
        if not values:
            return []
        width = self.histogram_bin
        low = math.floor(min(values) / width) * width
        high = (math.floor(max(values) / width) + 1) * width
        edges = np.arange(low, high + width / 2, width)
        counts, edges = np.histogram(np.asarray(values, dtype=float), bins=edges)
        return [
            {"start": float(edges[i]), "end": float(edges[i + 1]), "count": int(counts[i])}
            for i in range(len(counts))
        ]
