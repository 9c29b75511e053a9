"""Exception taxonomy shared across the package."""


class OwdetrError(Exception):
    """Base class for all package errors."""


class ShapeError(OwdetrError):
    """Tensor or image dimensions do not satisfy an operation's contract."""


class ContractError(OwdetrError):
    """A precondition stated by an operation's contract was violated."""


class CapacityError(ContractError):
    """More ground-truth instances than object queries."""


class BoxOutsideGridError(OwdetrError):
    """A box window lies fully outside the scoring grid; caller must skip it."""


class ConfigError(OwdetrError):
    """Invalid configuration value or unknown configuration key."""


class ManifestParseError(OwdetrError):
    """Malformed manifest file; message carries line/record context."""


class VersionError(OwdetrError):
    """File schema version is not supported."""


class ChecksumError(OwdetrError):
    """Stored checksum does not match the file payload."""


class TruncatedFileError(OwdetrError):
    """File ends before the advertised payload length."""


class DivergenceError(OwdetrError):
    """Training produced a non-finite loss.

    Carries the last finite-loss episode state so the caller can persist it.
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good
