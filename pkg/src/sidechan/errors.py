"""Exception hierarchy shared by every sidechan module."""


class SidechanError(Exception):
    """Root of all library errors."""


class ConfigError(SidechanError, ValueError):
    pass


# codec / channel decoding
class OddLengthError(SidechanError, ValueError):
    pass


class MissingMidTransition(SidechanError, ValueError):
    """A bit period without its mandatory mid-bit transition (desync)."""


class DegenerateInput(SidechanError, ValueError):
    """No two classes exist in the data handed to the binary classifier."""


class DecodeFailure(SidechanError):
    pass


# visual channel
class PlateNotVisible(SidechanError):
    pass


class EmptyRegion(SidechanError, ValueError):
    pass


# pki
class SaltSizeError(SidechanError, ValueError):
    pass


class EntrySizeError(SidechanError, ValueError):
    pass


class DuplicateCommit(SidechanError):
    pass


class NoCommit(SidechanError):
    pass


class CommitTooRecent(SidechanError):
    pass


class HashMismatch(SidechanError):
    pass


class ChainVerificationError(SidechanError):
    pass


class CollisionError(SidechanError):
    pass


class PeerAuthError(SidechanError):
    """Peer could not be authenticated through the PKI."""


class NotFound(PeerAuthError, KeyError):
    pass


class CertInvalid(PeerAuthError):
    pass


class CANotAccepted(PeerAuthError):
    pass


# handshake
class DegenerateSecret(SidechanError):
    pass


class Timeout(SidechanError):
    pass


class TagMismatch(SidechanError):
    pass
