"""Protocol failures.  ``exit_code`` is what the CLI reports for each family."""
from __future__ import annotations


class ProtocolError(Exception):
    exit_code = 1
    message = "protocol error"

    def __init__(self, detail: str | None = None):
        super().__init__(detail or self.message)


class ConfigError(ProtocolError):
    exit_code = 2
    message = "configuration error"


class IdentityError(ProtocolError):
    exit_code = 3
    message = "identity check failed"


class IdentityCheckFailed(IdentityError):
    pass


class DuplicateName(IdentityError):
    message = "name already registered"


class NoPendingAlloc(IdentityError):
    message = "no pending key allocation"


class StaleSystemKey(IdentityError):
    message = "stale system key"


class InvalidKeyAlloc(IdentityError):
    message = "invalid ciphertext"


class AuthenticityCheckFailed(IdentityError):
    message = "authenticity check failed"


class AuthorizationError(ProtocolError):
    exit_code = 4
    message = "access denied"


class UnknownTargetError(AuthorizationError):
    message = "unknown target"


class IntegrityError(ProtocolError):
    exit_code = 5
    message = "integrity failure"


class CorruptEnvelope(IntegrityError):
    message = "corrupt envelope"


class ForgedNodeData(IntegrityError):
    message = "forged node data"


class DigestMismatch(IntegrityError):
    message = "digest mismatch: data tampered"


class CacheMiss(IntegrityError):
    message = "cache miss"


class DecryptError(IntegrityError):
    message = "cannot decrypt shared record"


class LedgerError(ProtocolError):
    message = "ledger error"


class LedgerRevert(LedgerError):
    message = "ledger transaction reverted"


class UploadUnconfirmed(LedgerError):
    """The ciphertext is cached but the digest upload was not included in time."""
    message = "upload unconfirmed"

    def __init__(self, digest: bytes, receipt=None):
        super().__init__(f"upload unconfirmed for digest {digest.hex()}")
        self.digest = digest
        self.receipt = receipt
