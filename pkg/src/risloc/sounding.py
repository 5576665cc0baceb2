"""Channel sounding: training sets, frame simulation, whitening, stacking.

A sounding campaign transmits N pilot symbols per frame. A frame is one
(precoder, RIS phase) x (combiner) pair: the transmitter cycles through
m_bs = 0..M_B-1 hybrid precoders (each tied to one RIS configuration) and
the receiver through m_ms = 0..M_M-1 hybrid combiners. Pilot streams are
scaled Hadamard rows so their time-averaged Gram is identity over the
number of streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import hadamard, solve_triangular

from .arrays import UpaGeometry, upa_response
from .errors import (
    ConfigError,
    MissingBlock,
    NonUnitModulus,
    ShapeMismatch,
    SingularCombiner,
)
from .scene import ChannelTaps, PropagationPath

TRAINING_MODES = ("bm-only", "ris-only", "both")


@dataclass
class SoundingConfig:
    """Dimensions and power levels of one sounding campaign."""

    bs: UpaGeometry
    ms: UpaGeometry
    ris: Optional[UpaGeometry]
    n_rf_bs: int
    n_rf_ms: int
    frames_bs: int
    frames_ms: int
    n_symbols: int
    transmit_power: float
    noise_variance: float

    def __post_init__(self):
        if self.n_rf_bs < 1 or self.n_rf_ms < 1:
            raise ConfigError("both terminals need at least one RF chain")
        if self.n_rf_bs > self.bs.size or self.n_rf_ms > self.ms.size:
            raise ConfigError("RF chain count cannot exceed the element count")
        if self.frames_bs < 1 or self.frames_ms < 1:
            raise ConfigError("frame counts must be positive")
        n = self.n_symbols
        if n < 1 or (n & (n - 1)) != 0:
            raise ConfigError(f"symbol count must be a power of two, got {n}")
        if self.n_rf_bs > n:
            raise ConfigError("pilot design needs n_symbols >= transmit RF chains")
        if self.transmit_power <= 0 or self.noise_variance < 0:
            raise ConfigError("powers must be positive (noise may be zero)")


@dataclass
class TrainingSet:
    """Precoders, combiners, RIS phases and pilots for one campaign.

    Hybrid factors are stored explicitly: ``precoder_rf`` holds unit-modulus
    phase-shifter entries and the baseband factor is the scalar
    1/sqrt(elements), giving unit-norm effective columns.
    """

    config: SoundingConfig
    precoder_rf: np.ndarray  # (frames_bs, n_bs, n_rf_bs), unit modulus
    combiner_rf: np.ndarray  # (frames_ms, n_ms, n_rf_ms), unit modulus
    ris_phases: np.ndarray  # (frames_bs, n_ris) or (frames_bs, 0)
    pilots: np.ndarray  # (n_rf_bs, n_symbols)
    mode: str

    def __post_init__(self):
        cfg = self.config
        if self.precoder_rf.shape != (cfg.frames_bs, cfg.bs.size, cfg.n_rf_bs):
            raise ShapeMismatch(f"precoder bank has shape {self.precoder_rf.shape}")
        if self.combiner_rf.shape != (cfg.frames_ms, cfg.ms.size, cfg.n_rf_ms):
            raise ShapeMismatch(f"combiner bank has shape {self.combiner_rf.shape}")
        if self.pilots.shape != (cfg.n_rf_bs, cfg.n_symbols):
            raise ShapeMismatch(f"pilot matrix has shape {self.pilots.shape}")
        for name, bank in (("precoder", self.precoder_rf), ("combiner", self.combiner_rf)):
            if bank.size and np.max(np.abs(np.abs(bank) - 1.0)) > 1e-9:
                raise NonUnitModulus(f"{name} phase-shifter entries must be unit modulus")
        if self.ris_phases.size and np.max(np.abs(np.abs(self.ris_phases) - 1.0)) > 1e-9:
            raise NonUnitModulus("RIS phase entries must be unit modulus")

    def precoder(self, m_bs: int) -> np.ndarray:
        """Effective precoder of frame group m_bs, unit-norm columns."""
        return self.precoder_rf[m_bs] / np.sqrt(self.config.bs.size)

    def combiner(self, m_ms: int) -> np.ndarray:
        return self.combiner_rf[m_ms] / np.sqrt(self.config.ms.size)

    def pilot_gram_error(self) -> float:
        """Deviation of (1/N) S S^H from I / n_streams, max-abs entry."""
        n_s = self.config.n_rf_bs
        gram = self.pilots @ self.pilots.conj().T / self.config.n_symbols
        return float(np.max(np.abs(gram - np.eye(n_s) / n_s)))


def _random_phases(rng: np.random.Generator, shape) -> np.ndarray:
    return np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=shape))


def generate_training_set(
    config: SoundingConfig,
    mode: str,
    rng_seed,
    bs_ris_los: Optional[PropagationPath] = None,
) -> TrainingSet:
    """Draw a deterministic training set for the requested sounding mode.

    Modes: "bm-only" uses random precoders; "ris-only" points every precoder
    column at the known BS-to-RIS direction; "both" splits the columns, the
    first ceil(n_rf/2) aimed and the rest random. Combiner and RIS phases are
    random unit-modulus in every mode.
    """
    if mode not in TRAINING_MODES:
        raise ConfigError(f"unknown sounding mode {mode!r}, expected one of {TRAINING_MODES}")
    if mode != "bm-only" and bs_ris_los is None:
        raise ConfigError(f"mode {mode!r} requires the BS-to-RIS line-of-sight path")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)

    precoder_rf = _random_phases(rng, (config.frames_bs, config.bs.size, config.n_rf_bs))
    combiner_rf = _random_phases(rng, (config.frames_ms, config.ms.size, config.n_rf_ms))
    if config.ris is not None:
        ris_phases = _random_phases(rng, (config.frames_bs, config.ris.size))
    else:
        ris_phases = np.zeros((config.frames_bs, 0), dtype=complex)

    if mode != "bm-only":
        aimed = upa_response(bs_ris_los.departure, config.bs)
        n_aimed = config.n_rf_bs if mode == "ris-only" else (config.n_rf_bs + 1) // 2
        precoder_rf[:, :, :n_aimed] = aimed[None, :, None]

    n_s = config.n_rf_bs
    pilots = hadamard(config.n_symbols)[:n_s].astype(float) / np.sqrt(n_s)

    return TrainingSet(
        config=config,
        precoder_rf=precoder_rf,
        combiner_rf=combiner_rf,
        ris_phases=ris_phases,
        pilots=pilots.astype(complex),
        mode=mode,
    )


def _propagate_frame(taps: ChannelTaps, training: TrainingSet, m_bs: int) -> np.ndarray:
    """Noise-free antenna-domain signal of frame group m_bs, shape (n_ms, n)."""
    cfg = training.config
    if taps.taps.shape[1] != cfg.ms.size or taps.taps.shape[2] != cfg.bs.size:
        raise ShapeMismatch(
            f"tap tensor {taps.taps.shape} does not match arrays "
            f"({cfg.ms.size} rx, {cfg.bs.size} tx)"
        )
    n = cfg.n_symbols
    sent = training.precoder(m_bs) @ training.pilots  # (n_bs, n)
    received = np.zeros((cfg.ms.size, n), dtype=complex)
    for d in range(taps.tap_count):
        if d >= n:
            break
        received[:, d:] += taps.taps[d] @ sent[:, : n - d]
    return received


def _combine_frame(
    received: np.ndarray,
    training: TrainingSet,
    m_ms: int,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    cfg = training.config
    comb = training.combiner(m_ms)
    out = np.sqrt(cfg.transmit_power) * (comb.conj().T @ received)
    if rng is not None and cfg.noise_variance > 0.0:
        scale = np.sqrt(cfg.noise_variance / 2.0)
        noise = scale * (
            rng.standard_normal(received.shape) + 1j * rng.standard_normal(received.shape)
        )
        out += comb.conj().T @ noise
    return out.T


def simulate_received_frame(
    taps: ChannelTaps,
    training: TrainingSet,
    m_bs: int,
    m_ms: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Raw combined observation of one frame, shape (n_symbols, n_rf_ms).

    Row n holds sqrt(P_t) W^H sum_d H_d F s[n - d] plus combined noise,
    with the pilot stream zero before its first symbol. Noise entries are
    i.i.d. circular complex Gaussian with the configured variance; pass
    ``rng=None`` or zero variance for a noiseless frame.
    """
    received = _propagate_frame(taps, training, m_bs)
    return _combine_frame(received, training, m_ms, rng)


def whiten_block(raw_block: np.ndarray, combiner: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decorrelate the combined noise of one frame block.

    With L L^H the Cholesky factorization of W^H W, every observation row y
    is replaced by (L^{-1} y^T)^T, which turns combined noise of covariance
    sigma^2 W^H W into white noise of covariance sigma^2 I. Returns the
    whitened block and L.
    """
    raw_block = np.asarray(raw_block, dtype=complex)
    gram = combiner.conj().T @ combiner
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] < 1e-12 * eigs[-1]:
        raise SingularCombiner(
            f"combiner Gram matrix is rank deficient (eig ratio {eigs[0] / eigs[-1]:.3e})"
        )
    factor = np.linalg.cholesky(gram)
    white = solve_triangular(factor, raw_block.T, lower=True).T
    return white, factor


@dataclass
class ObservationBlock:
    """Whitened observation stacked over all frames.

    Block (m_bs, m_ms) occupies rows [m_bs * N, (m_bs + 1) * N) and columns
    [m_ms * n_rf_ms, (m_ms + 1) * n_rf_ms).
    """

    matrix: np.ndarray
    frames_bs: int
    frames_ms: int
    n_symbols: int
    n_rf_ms: int
    whiteners: Optional[np.ndarray] = None  # (frames_ms, n_rf_ms, n_rf_ms)

    def __post_init__(self):
        expected = (self.frames_bs * self.n_symbols, self.frames_ms * self.n_rf_ms)
        if self.matrix.shape != expected:
            raise ShapeMismatch(
                f"observation matrix has shape {self.matrix.shape}, expected {expected}"
            )

    def block(self, m_bs: int, m_ms: int) -> np.ndarray:
        r0 = m_bs * self.n_symbols
        c0 = m_ms * self.n_rf_ms
        return self.matrix[r0 : r0 + self.n_symbols, c0 : c0 + self.n_rf_ms]


def assemble_observation(
    blocks: dict,
    frames_bs: int,
    frames_ms: int,
    whiteners: Optional[np.ndarray] = None,
) -> ObservationBlock:
    """Stack per-frame whitened blocks into the full observation matrix.

    ``blocks`` maps (m_bs, m_ms) to an (n_symbols, n_rf_ms) array; every
    pair in the frame grid must be present.
    """
    if not blocks:
        raise MissingBlock("no observation blocks given")
    probe = next(iter(blocks.values()))
    n_symbols, n_rf = probe.shape
    matrix = np.zeros((frames_bs * n_symbols, frames_ms * n_rf), dtype=complex)
    for m_bs in range(frames_bs):
        for m_ms in range(frames_ms):
            if (m_bs, m_ms) not in blocks:
                raise MissingBlock(f"observation block {(m_bs, m_ms)} is missing")
            blk = np.asarray(blocks[(m_bs, m_ms)])
            if blk.shape != (n_symbols, n_rf):
                raise ShapeMismatch(
                    f"block {(m_bs, m_ms)} has shape {blk.shape}, expected {(n_symbols, n_rf)}"
                )
            matrix[
                m_bs * n_symbols : (m_bs + 1) * n_symbols,
                m_ms * n_rf : (m_ms + 1) * n_rf,
            ] = blk
    return ObservationBlock(
        matrix=matrix,
        frames_bs=frames_bs,
        frames_ms=frames_ms,
        n_symbols=n_symbols,
        n_rf_ms=n_rf,
        whiteners=whiteners,
    )


def save_observation_csv(path, obs: ObservationBlock) -> None:
    """Write every entry as a (row, col, re, im) record."""
    with open(path, "w", newline="") as fh:
        fh.write("row,col,re,im\n")
        mat = obs.matrix
        for r in range(mat.shape[0]):
            for c in range(mat.shape[1]):
                v = mat[r, c]
                # plain floats round-trip exactly through repr; numpy scalars do not
                fh.write(f"{r},{c},{float(v.real)!r},{float(v.imag)!r}\n")


def load_observation_csv(path, frames_bs: int, frames_ms: int) -> ObservationBlock:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    rows = data[:, 0].astype(int)
    cols = data[:, 1].astype(int)
    matrix = np.zeros((rows.max() + 1, cols.max() + 1), dtype=complex)
    matrix[rows, cols] = data[:, 2] + 1j * data[:, 3]
    if matrix.shape[0] % frames_bs or matrix.shape[1] % frames_ms:
        raise ShapeMismatch("observation dimensions are not divisible by the frame counts")
    return ObservationBlock(
        matrix=matrix,
        frames_bs=frames_bs,
        frames_ms=frames_ms,
        n_symbols=matrix.shape[0] // frames_bs,
        n_rf_ms=matrix.shape[1] // frames_ms,
    )


_BINARY_MAGIC = b"RLOBS1\x00\x00"


def save_observation_binary(path, obs: ObservationBlock) -> None:
    """Flat little-endian layout: magic, four uint64 dims, float64 re/im pairs
    in row-major order."""
    header = np.array(
        [obs.frames_bs, obs.n_symbols, obs.frames_ms, obs.n_rf_ms], dtype="<u8"
    )
    flat = np.empty((obs.matrix.size, 2), dtype="<f8")
    flat[:, 0] = obs.matrix.real.ravel()
    flat[:, 1] = obs.matrix.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(header.tobytes())
        fh.write(flat.tobytes())


def load_observation_binary(path) -> ObservationBlock:
    with open(path, "rb") as fh:
        magic = fh.read(len(_BINARY_MAGIC))
        if magic != _BINARY_MAGIC:
            raise ConfigError(f"not an observation dump: bad magic {magic!r}")
        dims = np.frombuffer(fh.read(32), dtype="<u8")
        frames_bs, n_symbols, frames_ms, n_rf = (int(v) for v in dims)
        count = frames_bs * n_symbols * frames_ms * n_rf
        flat = np.frombuffer(fh.read(count * 16), dtype="<f8").reshape(count, 2)
    matrix = (flat[:, 0] + 1j * flat[:, 1]).reshape(frames_bs * n_symbols, frames_ms * n_rf)
    return ObservationBlock(
        matrix=matrix,
        frames_bs=frames_bs,
        frames_ms=frames_ms,
        n_symbols=n_symbols,
        n_rf_ms=n_rf,
    )


def save_matrix_binary(path, matrix: np.ndarray) -> None:
    """Dump any complex matrix in the flat observation layout (dims 1x1)."""
    matrix = np.asarray(matrix, dtype=complex)
    header = np.array([1, matrix.shape[0], 1, matrix.shape[1]], dtype="<u8")
    flat = np.empty((matrix.size, 2), dtype="<f8")
    flat[:, 0] = matrix.real.ravel()
    flat[:, 1] = matrix.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(header.tobytes())
        fh.write(flat.tobytes())
