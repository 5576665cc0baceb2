"""Per-dimension dictionaries and sensing operators for sparse recovery.

Instead of one Kronecker dictionary over (x cosine, y cosine, delay), each
dimension keeps its own matrix: Psi1 and Psi2 hold conjugated axis steering
vectors on uniform cosine grids, Psi3 holds pulse tap signatures on a
uniform delay grid. The sensing side is stored per transmit frame as the
precoded pilot stream, because shifting the pilot by i_3 samples realizes
the delay index of the transmit tensor.

Two sources share this structure: "bm" senses through the BS array directly
and "brm" through the RIS, after folding the known BS-to-RIS segment and the
RIS phase profile into the effective precoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .arrays import PulseShape, UpaGeometry, upa_response
from .errors import ConfigError, ShapeMismatch
from .scene import PropagationPath
from .sounding import TrainingSet

SOURCE_BM = "bm"
SOURCE_BRM = "brm"


@dataclass(frozen=True)
class AngleGrid:
    """Uniform grid of direction cosines covering [-1, 1)."""

    values: np.ndarray
    physical_size: int

    @classmethod
    def uniform(cls, physical_size: int, ratio: float) -> "AngleGrid":
        n_atoms = int(round(physical_size * ratio))
        if n_atoms < physical_size:
            raise ConfigError("angle grid cannot be smaller than the array axis")
        values = -1.0 + 2.0 * np.arange(n_atoms) / n_atoms
        return cls(values=values, physical_size=physical_size)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DelayGrid:
    """Uniform grid of relative delays covering [0, taps * T_s)."""

    values: np.ndarray
    spacing: float

    @classmethod
    def uniform(cls, pulse: PulseShape, ratio: float) -> "DelayGrid":
        n_atoms = int(round(pulse.tap_count * ratio))
        if n_atoms < pulse.tap_count:
            raise ConfigError("delay grid cannot be smaller than the tap count")
        spacing = pulse.window / n_atoms
        return cls(values=np.arange(n_atoms) * spacing, spacing=spacing)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class MultiDictionary:
    """Per-dimension dictionaries of one source."""

    source: str
    psi1: np.ndarray  # (n_x, atoms_1), conjugated x steering
    psi2: np.ndarray  # (n_y, atoms_2), conjugated y steering
    psi3: np.ndarray  # (taps, atoms_3), pulse signatures
    angle_x: AngleGrid
    angle_y: AngleGrid
    delays: DelayGrid

    @property
    def atom_counts(self) -> tuple[int, int, int]:
        return (self.psi1.shape[1], self.psi2.shape[1], self.psi3.shape[1])

    @property
    def total_atoms(self) -> int:
        n1, n2, n3 = self.atom_counts
        return n1 * n2 * n3


def _cosine_dictionary(count: int, grid: AngleGrid) -> np.ndarray:
    # conjugate of the axis steering vector: exp(+1j pi i cosine)
    return np.exp(1j * np.pi * np.outer(np.arange(count), grid.values))


def _delay_dictionary(pulse: PulseShape, grid: DelayGrid) -> np.ndarray:
    t = np.arange(pulse.tap_count)[:, None] * pulse.sample_period - grid.values[None, :]
    return np.asarray(pulse.evaluate(t), dtype=float)


def build_dictionaries(
    source: str,
    tx_geom: UpaGeometry,
    pulse: PulseShape,
    ratios=(8.0, 8.0, 8.0),
) -> MultiDictionary:
    """Build the three dictionaries of a source over its transmit geometry.

    For the direct source the transmit geometry is the BS array; for the
    cascaded source it is the RIS, whose departure side is the quantity the
    angular dictionaries must resolve.
    """
    if source not in (SOURCE_BM, SOURCE_BRM):
        raise ConfigError(f"unknown source tag {source!r}")
    gx = AngleGrid.uniform(tx_geom.n_x, ratios[0])
    gy = AngleGrid.uniform(tx_geom.n_y, ratios[1])
    gd = DelayGrid.uniform(pulse, ratios[2])
    return MultiDictionary(
        source=source,
        psi1=_cosine_dictionary(tx_geom.n_x, gx),
        psi2=_cosine_dictionary(tx_geom.n_y, gy),
        psi3=_delay_dictionary(pulse, gd),
        angle_x=gx,
        angle_y=gy,
        delays=gd,
    )


@dataclass
class SensingOperator:
    """Measurement tensor of one source, stored as per-frame pilot products.

    ``time_products[m]`` is the effective precoder of transmit frame m
    applied to the pilot stream, shape (transmit elements, n_symbols). The
    full sensing tensor entry at row (m, n) and multi-index (i1, i2, i3) is
    time_products[m][i1 * n_y + i2, n - i3] with zero prefix for n < i3.
    """

    source: str
    time_products: np.ndarray  # (frames_bs, n_x * n_y, n_symbols)
    n_x: int
    n_y: int
    tap_count: int
    bs_ris_delay: float = 0.0

    def __post_init__(self):
        if self.time_products.ndim != 3:
            raise ShapeMismatch("time products must be (frames, elements, symbols)")
        if self.time_products.shape[1] != self.n_x * self.n_y:
            raise ShapeMismatch(
                f"{self.time_products.shape[1]} rows cannot index a "
                f"{self.n_x}x{self.n_y} transmit grid"
            )

    @property
    def frames(self) -> int:
        return self.time_products.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.time_products.shape[2]

    @property
    def rows(self) -> int:
        return self.frames * self.n_symbols

    def dense_matrix(self) -> np.ndarray:
        """Materialize the sensing tensor as a (rows, n_x*n_y*taps) matrix.

        Columns follow C order over (i1, i2, i3). Intended for small
        validation problems; memory grows with every dimension.
        """
        n_el = self.n_x * self.n_y
        n = self.n_symbols
        dense = np.zeros((self.frames * n, n_el * self.tap_count), dtype=complex)
        for m in range(self.frames):
            x = self.time_products[m]
            for i3 in range(self.tap_count):
                # entry (m*n + t, (el, i3)) = x[el, t - i3]
                block = np.zeros((n, n_el), dtype=complex)
                block[i3:, :] = x[:, : n - i3].T
                dense[m * n : (m + 1) * n, i3 :: self.tap_count] = block
        return dense


def build_sensing(
    training: TrainingSet,
    tap_count: int,
    source: str = SOURCE_BM,
    bs_ris_los: Optional[PropagationPath] = None,
) -> SensingOperator:
    """Build the sensing operator of either source.

    For the cascaded source the known BS-to-RIS line of sight and the frame's
    RIS phase profile are folded into an effective RIS-side precoder:
    gain * diag(phase) a_ris(arrival) a_bs(departure)^H F. The segment delay
    is recorded so estimates can be reduced to the RIS-to-MS leg.
    """
    cfg = training.config
    if source == SOURCE_BM:
        products = np.stack(
            [training.precoder(m) @ training.pilots for m in range(cfg.frames_bs)]
        )
        return SensingOperator(
            source=SOURCE_BM,
            time_products=products,
            n_x=cfg.bs.n_x,
            n_y=cfg.bs.n_y,
            tap_count=tap_count,
        )
    if source != SOURCE_BRM:
        raise ConfigError(f"unknown source tag {source!r}")
    if bs_ris_los is None:
        raise ConfigError("cascaded sensing requires the BS-to-RIS line-of-sight path")
    if cfg.ris is None:
        raise ConfigError("cascaded sensing requires a RIS geometry")

    a_ris_in = upa_response(bs_ris_los.arrival, cfg.ris)
    a_bs_dep = upa_response(bs_ris_los.departure, cfg.bs)
    products = np.empty((cfg.frames_bs, cfg.ris.size, cfg.n_symbols), dtype=complex)
    for m in range(cfg.frames_bs):
        driven = (np.conj(a_bs_dep) @ training.precoder(m)) @ training.pilots  # (n,)
        products[m] = np.outer(
            bs_ris_los.gain * training.ris_phases[m] * a_ris_in, driven
        )
    return SensingOperator(
        source=SOURCE_BRM,
        time_products=products,
        n_x=cfg.ris.n_x,
        n_y=cfg.ris.n_y,
        tap_count=tap_count,
        bs_ris_delay=bs_ris_los.delay,
    )


def apply_sensing(
    op: SensingOperator,
    dic: MultiDictionary,
    coefficients: np.ndarray,
) -> np.ndarray:
    """Predict the observation of a coefficient tensor, dimension by dimension.

    ``coefficients`` has shape (atoms_1, atoms_2, atoms_3, columns). The
    Kronecker dictionary is never materialized: each Psi_k is contracted in
    turn and the delay axis is realized as pilot shifts.
    """
    coefficients = np.asarray(coefficients)
    n1, n2, n3 = dic.atom_counts
    if coefficients.ndim == 2 and coefficients.shape[0] == n1 * n2 * n3:
        coefficients = coefficients.reshape(n1, n2, n3, -1)
    if coefficients.shape[:3] != (n1, n2, n3):
        raise ShapeMismatch(
            f"coefficient tensor {coefficients.shape} does not match atom counts "
            f"{(n1, n2, n3)}"
        )
    if op.n_x != dic.psi1.shape[0] or op.n_y != dic.psi2.shape[0]:
        raise ShapeMismatch("sensing operator and dictionaries disagree on the array size")

    taps = dic.psi3.shape[0]
    cols = coefficients.shape[3]
    n = op.n_symbols

    mixed = np.tensordot(dic.psi1, coefficients, axes=([1], [0]))  # (n_x, n2, n3, cols)
    mixed = np.tensordot(dic.psi2, mixed, axes=([1], [1]))  # (n_y, n_x, n3, cols)
    mixed = np.tensordot(dic.psi3, mixed, axes=([1], [2]))  # (taps, n_y, n_x, cols)
    # reorder to (elements in x-major order, taps, cols)
    mixed = mixed.transpose(2, 1, 0, 3).reshape(op.n_x * op.n_y, taps, cols)

    out = np.zeros((op.frames * n, cols), dtype=complex)
    for m in range(op.frames):
        x = op.time_products[m]
        acc = np.zeros((n, cols), dtype=complex)
        for d in range(min(taps, n)):
            acc[d:, :] += x[:, : n - d].T @ mixed[:, d, :]
        out[m * n : (m + 1) * n] = acc
    return out
