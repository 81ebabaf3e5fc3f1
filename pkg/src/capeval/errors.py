"""Error taxonomy shared by every module.

Exit-code / HTTP mapping is driven by ``kind``:
  usage   -> exit 2 (bad flags, missing files, wrong file type)
  data    -> exit 3 (corrupt or degenerate inputs, unresolved ids)
  numeric -> exit 4 (non-finite results, overflow after stabilization)
"""

from __future__ import annotations


class CapevalError(Exception):
    """Base class for all expected failures."""

    kind = "data"
    exit_code = 3


class UsageError(CapevalError):
    """The request itself is wrong: bad arguments, missing or mistyped files."""

    kind = "usage"
    exit_code = 2


class FormatError(UsageError):
    """A file is not in the expected format at all (bad magic, bad version)."""


class DataError(CapevalError):
    """Input parses but violates a data contract."""

    kind = "data"
    exit_code = 3


class CorruptionError(DataError):
    """A well-formed header disagrees with the file body."""


class SchemaError(DataError):
    """A dataset line is missing or mistypes a required field."""


class DegenerateInputError(DataError):
    """A statistic is undefined on this input (constant lists, all ties)."""


class DegenerateBatchError(DataError):
    """A training batch cannot produce a gradient; callers may skip it."""


class NumericError(CapevalError):
    """Arithmetic broke down: non-finite loss, overflow, zero norm after a map."""

    kind = "numeric"
    exit_code = 4
