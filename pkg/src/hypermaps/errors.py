"""Exception hierarchy shared across the package.

Split so the CLI can map failures to exit codes: ValidationError -> 2
(bad configuration, bad manifest, bad arguments), DataError -> 3
(missing or corrupt files on disk).
"""


class HypermapsError(Exception):
    pass


class ValidationError(HypermapsError):
    """Inputs are structurally wrong (config, manifest, argument contracts)."""


class DataError(HypermapsError):
    """A referenced file is missing, truncated, or otherwise unreadable."""


class TensorFormatError(DataError):
    """A tensor file does not follow the binary layout."""


class ModelFormatError(DataError):
    """A saved classifier bundle is corrupt or has the wrong version."""
