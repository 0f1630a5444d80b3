import logging

from agents.base_agent import BaseAgent


class DelayAgent(BaseAgent):
    """
    Third layer: transmission delay (recorded time minus result time) and
    sampling delay (how far the gap to the previous non-duplicate exceeds the
    expected delay T of the feature of interest).
    """

    def __init__(self, name, factors):
        super().__init__(name)
        self.factors = factors
        self._missing = set()

    def run(self, assessed):
        for item in assessed:
            if item.duplicate:
                continue
            obs = item.observation
            factor = self.factors.expected_delay(obs.foi)
            if factor is None:
                item.missing.append("delay")
                if obs.foi not in self._missing:
                    self._missing.add(obs.foi)
                    self.log(f"MissingFactor: no expected delay for {obs.foi}", level=logging.WARNING)
                continue

            item.result.transmission_delay = obs.t_rec - obs.t_new
            if item.previous is None:
                item.result.time_delay = 0
            else:
                item.result.time_delay = max(0, (obs.t_new - item.previous) - factor.seconds)
        return assessed
