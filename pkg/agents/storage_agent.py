import logging

from agents.base_agent import BaseAgent


class StorageAgent(BaseAgent):
    """Fifth layer: persist assessed observations and duplicate-count updates."""

    def __init__(self, name, store):
        super().__init__(name)
        self.store = store

    def run(self, assessed):
        stored = 0
        duplicates = 0
        for item in assessed:
            self.store.put(item)
            if item.duplicate:
                duplicates += 1
            else:
                stored += 1
        self.log(f"Stored {stored} observation(s), updated {duplicates} duplicate count(s)", level=logging.DEBUG)
        return {"stored": stored, "duplicates": duplicates}
