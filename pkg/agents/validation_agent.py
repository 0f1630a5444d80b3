import logging

from agents.base_agent import BaseAgent


class ValidationAgent(BaseAgent):
    """
    Fourth layer: range validation.

    Null values are always out of range. Otherwise the range factor whose
    time-of-day window covers the result time decides (bounds inclusive);
    without a factor the observation counts as in range.
    """

    def __init__(self, name, factors):
        super().__init__(name)
        self.factors = factors
        self._missing = set()

    def run(self, assessed):
        out = 0
        for item in assessed:
            if item.duplicate:
                continue
            obs = item.observation
            if obs.value is None:
                item.result.is_out_of_range = True
                out += 1
                continue

            factor = self.factors.range_for(obs.foi, obs.prop, obs.t_new)
            if factor is None:
                item.result.is_out_of_range = False
                item.missing.append("range")
                if (obs.foi, obs.prop) not in self._missing:
                    self._missing.add((obs.foi, obs.prop))
                    self.log(f"MissingFactor: no range for {obs.foi}/{obs.prop}")
                continue

            try:
                item.result.is_out_of_range = not factor.contains(float(obs.value))
            except (TypeError, ValueError):
                item.result.is_out_of_range = True
            out += int(item.result.is_out_of_range)

        self.log(f"{out} observation(s) out of range", level=logging.DEBUG)
        return assessed
