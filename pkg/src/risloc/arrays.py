"""Planar-array primitives: direction vectors, steering responses, pulse taps.

All arrays are uniform planar arrays (UPA) with half-wavelength spacing,
lying in planes parallel to the global xy-plane. A propagation direction is
represented by its direction cosines (x, y, z) with unit 2-norm; only the
x and y cosines enter the array response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegenerateGeometry, InconsistentDirection

SPEED_OF_LIGHT = 299_792_458.0

_UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class DirectionVector:
    """Unit propagation direction expressed through its direction cosines."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm_sq = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm_sq - 1.0) > _UNIT_NORM_TOL:
            raise InconsistentDirection(
                f"direction cosines have norm {math.sqrt(norm_sq):.12g}, expected 1"
            )

    @classmethod
    def from_array(cls, v) -> "DirectionVector":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def towards(cls, start, end) -> "DirectionVector":
        """Unit vector pointing from ``start`` to ``end``."""
        d = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
        n = float(np.linalg.norm(d))
        if n == 0.0:
            raise DegenerateGeometry("cannot build a direction between coincident points")
        return cls.from_array(d / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def horizontal_norm(self) -> float:
        """Norm of the (x, y) projection."""
        return math.hypot(self.x, self.y)

    def negated(self) -> "DirectionVector":
        return DirectionVector(-self.x, -self.y, -self.z)


@dataclass(frozen=True)
class UpaGeometry:
    """Element counts of a uniform planar array, x-major Kronecker order."""

    n_x: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ConfigError(f"array needs at least one element per axis, got {self.n_x}x{self.n_y}")

    @property
    def size(self) -> int:
        return self.n_x * self.n_y


@dataclass(frozen=True)
class PulseShape:
    """Sampled transmit pulse: evaluation function, sample period, tap count.

    ``evaluate`` maps time in seconds to the pulse amplitude, normalized so
    that evaluate(0) == 1. The default is the ideal bandlimited pulse
    sinc(t / sample_period).
    """

    sample_period: float
    tap_count: int
    evaluate: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.sample_period <= 0.0:
            raise ConfigError("sample period must be positive")
        if self.tap_count < 1:
            raise ConfigError("tap count must be at least 1")
        if self.evaluate is None:
            period = self.sample_period
            object.__setattr__(self, "evaluate", lambda t: np.sinc(np.asarray(t) / period))

    @classmethod
    def sinc(cls, sample_period: float, tap_count: int) -> "PulseShape":
        return cls(sample_period=sample_period, tap_count=tap_count)

    @property
    def window(self) -> float:
        """Span of the tap window in seconds."""
        return self.tap_count * self.sample_period


def axis_response(count: int, cosine: float) -> np.ndarray:
    """Uniform linear array response along one axis.

    Entry i is exp(-1j * pi * i * cosine) for i = 0..count-1, so the first
    element is the phase reference.
    """
    return np.exp(-1j * np.pi * np.arange(count) * cosine)


def upa_response(direction: DirectionVector, geom: UpaGeometry) -> np.ndarray:
    """Steering vector of a UPA for the given direction.

    The element at grid position (i_x, i_y) sits at flat index
    i_x * n_y + i_y and responds with
    exp(-1j * pi * (i_x * dir.x + i_y * dir.y)).
    """
    return np.kron(axis_response(geom.n_x, direction.x), axis_response(geom.n_y, direction.y))


def pulse_delay_vector(relative_delay: float, pulse: PulseShape) -> np.ndarray:
    """Tap-domain signature of a path: entry d is pulse(d * T_s - delay)."""
    t = np.arange(pulse.tap_count) * pulse.sample_period - relative_delay
    return np.asarray(pulse.evaluate(t), dtype=float)


def resolve_direction_z(phi_x: float, phi_y: float, sign: int) -> DirectionVector:
    """Complete a direction from its (x, y) cosines using a known z sign.

    The z magnitude follows from the unit-norm constraint; ``sign`` encodes
    scene knowledge (for example, a terminal below its anchor sees departure
    directions with negative z).
    """
    if sign not in (-1, 1):
        raise ConfigError(f"z sign must be +1 or -1, got {sign!r}")
    planar = phi_x * phi_x + phi_y * phi_y
    if planar > 1.0 + _UNIT_NORM_TOL:
        raise InconsistentDirection(
            f"planar cosines have squared norm {planar:.12g} > 1, no valid z exists"
        )
    z = sign * math.sqrt(max(0.0, 1.0 - planar))
    return DirectionVector(phi_x, phi_y, z)
