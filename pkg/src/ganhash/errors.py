"""Exception types shared across the package.

Shape and numeric-domain violations raise plain ``ValueError`` unless a
caller needs to tell them apart; the classes below exist because the CLI
and tests dispatch on them.
"""


class GanHashError(Exception):
    """Base class for package-specific failures."""


class MalformedFileError(GanHashError, ValueError):
    """A binary input file does not match its documented layout."""


class InvalidLabelError(GanHashError, ValueError):
    """A label byte or label vector violates the labeling contract."""


class InfeasibleSplitError(GanHashError, ValueError):
    """A supervised split cannot satisfy the per-class quota."""


class InfeasibleSamplingError(GanHashError, RuntimeError):
    """Triplet sampling exhausted its retry budget."""


class EmptyInputError(GanHashError, ValueError):
    """An operation requiring a nonempty collection received an empty one."""


class InvalidQueryError(GanHashError, ValueError):
    """A retrieval query lacks the labels the metric needs."""


class ConfigError(GanHashError, ValueError):
    """A configuration value or key is invalid."""


class DivergenceError(GanHashError, RuntimeError):
    """Training produced a non-finite loss."""
