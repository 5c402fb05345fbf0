"""Exception hierarchy with machine-parseable categories for the CLI."""


class BisenseError(Exception):
    """Base class; `category` is the one-word tag emitted on stderr."""

    category = "internal"


class FormatError(BisenseError):
    """Malformed input file (bad header, bad line, wrong fields)."""

    category = "format"


class DataError(BisenseError):
    """Well-formed input that violates a data invariant (duplicate ids,
    unresolvable senses, unknown lemmas)."""

    category = "validation"


class ConfigError(BisenseError):
    """Invalid or infeasible configuration."""

    category = "config"


class ResourceError(BisenseError):
    """A required file or resource is missing."""

    category = "resource"
