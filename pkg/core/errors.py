"""Errors raised by the resource tree. Each carries the HTTP status the monitor API answers with."""


class ResourceError(Exception):
    status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class BadRequest(ResourceError):
    status = 400


class BadCredentials(ResourceError):
    status = 401


class AccessDenied(ResourceError):
    status = 403


class NotFound(ResourceError):
    status = 404


class DuplicateName(ResourceError):
    status = 409


class Empty(ResourceError):
    """Container exists but holds no content instance."""
    status = 409


class InvalidAcop(BadRequest):
    pass


class ArityMismatch(BadRequest):
    pass


class MalformedContent(BadRequest):
    pass
