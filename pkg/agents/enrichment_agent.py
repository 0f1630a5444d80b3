import logging

from agents.base_agent import BaseAgent
from quality.errors import QualityError


class EnrichmentAgent(BaseAgent):
    """
    First layer: links each raw record to its knowledge-base semantics.

    One raw record (all parameters of a node at one instant) becomes one
    observation per observed property, each with a deterministic uri.
    """

    def __init__(self, name, knowledge_base):
        super().__init__(name)
        self.kb = knowledge_base

    def run(self, records):
        """
        Enrich raw records.

        Args:
            records (list): RawRecord items in arrival order

        Returns:
            dict: "observations" (EnrichedObservation list, arrival order kept)
                  and "failures" (records the knowledge base could not place)
        """
        observations = []
        failures = []
        for record in records:
            try:
                observations.extend(self.kb.enrich(record))
            except QualityError as e:
                failures.append({"record": record, "error": e.message, "status": e.status})

        self.log(f"Enriched {len(records) - len(failures)} record(s) into {len(observations)} observation(s)",
                 level=logging.DEBUG)
        return {"observations": observations, "failures": failures}
