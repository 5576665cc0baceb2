"""Exception types shared across the simulator."""


class RislocError(Exception):
    """Base class for all library errors."""


class ConfigError(RislocError):
    """Invalid or inconsistent configuration values."""


class ShapeMismatch(RislocError):
    """Operands have incompatible shapes or metadata."""


class InconsistentDirection(RislocError):
    """Direction cosines violate the unit-norm constraint."""


class DegenerateGeometry(RislocError):
    """Geometric construction collapsed to a zero-length path."""


class NonUnitModulus(RislocError):
    """Phase-shifter entries must lie on the unit circle."""


class SingularCombiner(RislocError):
    """Combiner Gram matrix is numerically rank deficient."""


class MissingBlock(RislocError):
    """Observation assembly is missing a per-frame block."""


class NoProgress(RislocError):
    """Greedy selection found only zero-norm atoms."""


class NoLoSPath(RislocError):
    """Localization requires a designated line-of-sight path."""


class UnderDetermined(RislocError):
    """No usable clock-offset candidates survived filtering."""


class NegativeDelay(RislocError):
    """Recovered absolute delay is not positive."""


class ParallelGeometry(RislocError):
    """Anchor rays are parallel; the clock-offset equation is singular."""


class EmptyInput(RislocError):
    """Operation requires at least one sample."""
