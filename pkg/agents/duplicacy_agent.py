import logging
import threading

from agents.base_agent import BaseAgent
from quality.models import AssessedObservation, AssessmentResult, StreamState


class DuplicacyAgent(BaseAgent):
    """
    Second layer: an observation whose result time is not after the stream's
    last non-duplicate is a duplicate.

    Non-duplicates get numOfDuplicates 0 and advance the stream; duplicates
    get the number of times their uri has been received so far.
    """

    def __init__(self, name, states=None):
        super().__init__(name)
        self.states = states if states is not None else {}
        self._guard = threading.Lock()

    def state(self, stream):
        # callers hold the node lock, which covers every stream of that node
        with self._guard:
            return self.states.setdefault(stream, StreamState())

    def run(self, observations):
        assessed = []
        duplicates = 0
        for obs in observations:
            state = self.state(obs.stream)
            state.received[obs.uri] += 1

            if state.t_last is not None and obs.t_new <= state.t_last:
                duplicates += 1
                assessed.append(AssessedObservation(
                    observation=obs,
                    result=AssessmentResult(num_of_duplicates=state.received[obs.uri]),
                    duplicate=True,
                ))
                continue

            assessed.append(AssessedObservation(observation=obs, previous=state.t_last))
            state.t_last = obs.t_new
            state.last_uri = obs.uri

        self.log(f"{len(assessed) - duplicates} new, {duplicates} duplicate observation(s)", level=logging.DEBUG)
        return assessed
