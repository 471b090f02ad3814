"""Exception types raised across the library.

Everything derives from :class:`RulefeatError` so callers can catch one
base class at the CLI boundary.
"""

from __future__ import annotations


class RulefeatError(Exception):
    """Base class for all library errors."""


# -- corpus ----------------------------------------------------------------

class EmptyLine(RulefeatError):
    """Tokenization received a line that is empty after trimming."""


class EmptyDataset(RulefeatError):
    """A dataset file contained no instances."""


class ParseError(RulefeatError):
    """Malformed input with a known location.

    Used both for dataset files (line number) and for rule DSL source
    (line and column).
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(message + where)


class FormatError(RulefeatError):
    """An embedding file violates the header/row layout."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message + (f" at line {line}" if line is not None else ""))


# -- rules -----------------------------------------------------------------

class DuplicateRule(RulefeatError):
    """Two rules in one program share a name."""


class ConfidenceRange(RulefeatError):
    """A rule confidence lies outside (0, 1]."""


class UnsupportedConfidence(RulefeatError):
    """Compilation requested for a rule with confidence != 1."""


# -- neural ----------------------------------------------------------------

class VocabOverflow(RulefeatError):
    """An encoded index is outside the embedding table."""


class ShapeError(RulefeatError):
    """Two sequences that must align have different lengths."""


class NonFiniteGradient(RulefeatError):
    """A gradient tensor contains NaN or infinity."""


class NonFiniteLoss(RulefeatError):
    """Training produced a non-finite loss; carries the offending batch ids."""

    def __init__(self, message: str, epoch: int, step: int, instance_ids: tuple[int, ...]):
        self.epoch = epoch
        self.step = step
        self.instance_ids = instance_ids
        super().__init__(message)


# -- evalkit ---------------------------------------------------------------

class EmptySubset(RulefeatError):
    """No instance of the dataset is matched by any rule."""


class TooFewInstances(RulefeatError):
    """A fold split was requested with more folds than instances."""


class TooFewSamples(RulefeatError):
    """A confidence interval needs at least two samples."""


# -- checkpoints -----------------------------------------------------------

class IncompatibleCheckpoint(RulefeatError):
    """The file is not a model checkpoint this version can read."""


class CorruptCheckpoint(RulefeatError):
    """The checkpoint is truncated or fails its integrity check."""
