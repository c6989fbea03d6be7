"""Exception hierarchy and the process exit codes used by the CLI."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_CRYPTO = 4


class VFBoostError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(VFBoostError):
    """Invalid configuration or parameter precondition violation."""

    exit_code = EXIT_CONFIG


class DatasetError(VFBoostError):
    """Unusable input data (bad file, empty id intersection, ...)."""

    exit_code = EXIT_CONFIG


class CryptoError(VFBoostError):
    """Cryptographic contract violation."""

    exit_code = EXIT_CRYPTO


class KeyMismatchError(CryptoError):
    """Operands belong to different key pairs."""


class PlaintextOverflowError(CryptoError):
    """Plaintext does not fit the key's message space."""


class ProtocolError(VFBoostError):
    """Out-of-order, malformed or unexpected party-to-party message."""

    exit_code = EXIT_PROTOCOL


class CorruptionError(ProtocolError):
    """Received payload fails an integrity check."""


class TransportError(ProtocolError):
    """Peer unreachable, connection dropped, or receive timed out."""
