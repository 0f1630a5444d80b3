import logging

from utils.logging_setup import configure_logging, get_logger


class BaseAgent:
    """Base class for the quality-pipeline agents with simple logging.

    Logs through the CityOps logger tree (console plus logs/pipeline.log,
    see utils.logging_setup) with an [AgentName] prefix.
    """

    def __init__(self, name: str):
        """Initialize the agent with a name.

        Args:
            name (str): The name of the agent.
        """
        self.name = name
        if not logging.getLogger("CityOps").handlers:
            configure_logging()
        self._logger = get_logger(name)

    def log(self, message: str, level: int = logging.INFO):
        """Log a message prefixed with the agent name.

        Args:
            message (str): The message to log.
            level (int): logging level, INFO unless given.
        """
        self._logger.log(level, f"[{self.name}] {message}")

    def run(self, input_data=None):
        """Execute the agent's main logic.

        Args:
            input_data (Any): Input data for the agent.

        Returns:
            Any: Output from the agent.

        Raises:
            NotImplementedError: Must be implemented by subclasses.
        """
        raise NotImplementedError("Each agent must implement its own run() method.")
