"""Errors raised by the edge adapters."""


class IngestError(Exception):
    status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class TooShort(IngestError):
    status = 400


class NonHexDigit(IngestError):
    status = 400


class FieldOverflow(IngestError):
    status = 400


class UserNotFound(IngestError):
    status = 404

    def __init__(self, message: str = "user not found"):
        super().__init__(message)


class InsufficientFunds(IngestError):
    status = 402

    def __init__(self, message: str = "Insufficient amount in the account"):
        super().__init__(message)


class SessionStateError(IngestError):
    """A charger step was requested in the wrong session state."""
    status = 409


class PlatformUnreachable(IngestError):
    status = 503
