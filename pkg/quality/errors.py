"""Errors raised by the quality pipeline."""


class QualityError(Exception):
    status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class UnknownNode(QualityError):
    """The node has no knowledge-base entry."""
    status = 404


class MissingTimestamp(QualityError):
    status = 400


class MissingFactor(QualityError):
    """No quality factor covers a (feature of interest, property) at that time."""
    status = 422


class NoData(QualityError):
    status = 404


class BadFactor(QualityError):
    """A quality factor table entry is malformed (min > max, overlapping windows, T <= 0)."""
    status = 400
