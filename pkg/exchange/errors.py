"""
Errors raised by the catalogue, token service and resource server.

Each error renders as the exchange's {"type", "title", "detail"} body. Every
token failure renders the same InvalidAuthorizationToken body; the specific
reason only goes to the log.
"""
from typing import Dict


class ExchangeError(Exception):
    status = 500
    urn = "urn:dx:rs:internalServerError"
    title = "Internal Server Error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    @property
    def detail(self) -> str:
        return self.message

    def body(self) -> Dict[str, str]:
        return {"type": self.urn, "title": self.title, "detail": self.detail}


class InvalidToken(ExchangeError):
    status = 401
    urn = "urn:dx:rs:InvalidAuthorizationToken"
    title = "Not Authorized"

    @property
    def detail(self) -> str:
        return "Token is invalid"


class Expired(InvalidToken):
    pass


class WrongAudience(InvalidToken):
    pass


class NotCovered(InvalidToken):
    pass


class Revoked(InvalidToken):
    pass


class Unauthenticated(ExchangeError):
    status = 401
    urn = "urn:dx:rs:unauthorized"
    title = "Not Authorized"


class NotRegistered(ExchangeError):
    status = 403
    urn = "urn:dx:as:NotRegistered"
    title = "Not Registered"


class NoPolicy(ExchangeError):
    status = 403
    urn = "urn:dx:as:NoPolicy"
    title = "No Access Policy"


class UnknownItem(ExchangeError):
    status = 404
    urn = "urn:dx:rs:resourceNotFound"
    title = "Not Found"


class NoData(ExchangeError):
    status = 404
    urn = "urn:dx:rs:resourceNotFound"
    title = "No Data"


class BadQuery(ExchangeError):
    status = 400
    urn = "urn:dx:rs:badRequest"
    title = "Bad Request"


class SpanTooLarge(BadQuery):
    urn = "urn:dx:rs:invalidParameter"
