"""Errors raised by the multi-tenant lake."""


class LakeError(Exception):
    status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class BadEnvelope(LakeError):
    """The notification body is not an m2m:sgn carrying a content instance."""
    status = 400


class BadWindow(LakeError):
    """A temporal query whose start is after its end."""
    status = 400


class UnknownVertical(LakeError):
    status = 422


class UnknownTenant(LakeError):
    status = 404


class UnknownNode(LakeError):
    status = 404


class DuplicateKey(LakeError):
    """(node, timestamp) already stored: an exact re-delivery."""
    status = 409


class VersionNotFound(LakeError):
    status = 422


class StoreUnavailable(LakeError):
    status = 503
