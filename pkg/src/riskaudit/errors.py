"""Exception hierarchy.

Every error raised for bad input or an unusable dataset derives from
:class:`AuditError`; the command line maps those to exit code 1 and anything
else to exit code 2.
"""


class AuditError(Exception):
    """Base class for validation and precondition failures."""


class RowError(AuditError):
    """A problem tied to a specific data row (1-based, header excluded)."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"row {row}")


class MissingColumn(AuditError):
    pass


class NonBinaryOutcome(RowError):
    pass


class ScoreOutOfRange(RowError):
    pass


class DuplicateId(RowError):
    pass


class RaggedEmbedding(RowError):
    pass


class MissingValue(RowError):
    pass


class UnknownAttribute(AuditError):
    pass


class MissingBlock(AuditError):
    pass


class DegenerateLabels(AuditError):
    pass


class TooFewPerClass(AuditError):
    pass


class DimensionBlowup(AuditError):
    pass


class SingleClassTarget(AuditError):
    pass


class NonFiniteFeature(AuditError):
    pass


class SchemaMismatch(AuditError):
    pass


class EmptyEvaluationSet(AuditError):
    pass


class SplitTooSmall(AuditError):
    pass


class FoldDegenerate(AuditError):
    pass


class InvalidConfig(AuditError):
    pass


class InvalidSpec(AuditError):
    pass


class NoPlantedBias(AuditError):
    pass


class TooLarge(AuditError):
    pass


class EmptyTrajectory(AuditError):
    pass
