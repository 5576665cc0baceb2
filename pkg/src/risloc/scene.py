"""Indoor scene description, first-order image-source tracing, channel taps.

The scene is a rectangular room with six axis-aligned reflective surfaces,
a base station (BS), a reconfigurable intelligent surface (RIS) and a mobile
station (MS). Propagation paths carry a complex gain, departure and arrival
directions, an absolute delay and a surface label. Channel taps follow the
wideband geometric model: each path contributes a rank-one angular outer
product weighted by the pulse sampled at the path delay relative to the
receiver clock offset.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .arrays import (
    SPEED_OF_LIGHT,
    DirectionVector,
    PulseShape,
    UpaGeometry,
    pulse_delay_vector,
    upa_response,
)
from .errors import (
    ConfigError,
    DegenerateGeometry,
    NonUnitModulus,
    ShapeMismatch,
)

#: default surface reflection coefficient, 0.7 * exp(1j * pi)
DEFAULT_REFLECTION = complex(-0.7, 0.0)

_AXIS_NAMES = "xyz"


@dataclass(frozen=True)
class Surface:
    """Axis-aligned reflective plane: normal axis, plane offset, coefficient."""

    name: str
    axis: int
    offset: float
    reflection: complex = DEFAULT_REFLECTION

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ConfigError(f"surface axis must be 0, 1 or 2, got {self.axis}")

    def mirror(self, point: np.ndarray) -> np.ndarray:
        img = np.array(point, dtype=float)
        img[self.axis] = 2.0 * self.offset - img[self.axis]
        return img


@dataclass(frozen=True)
class PropagationPath:
    """One geometric path between a transmitter and a receiver."""

    gain: complex
    departure: DirectionVector
    arrival: DirectionVector
    delay: float
    label: str

    @property
    def length(self) -> float:
        return self.delay * SPEED_OF_LIGHT


def default_surfaces(room, reflection: complex = DEFAULT_REFLECTION) -> list[Surface]:
    """Six face surfaces of a rectangular room."""
    (x0, x1), (y0, y1), (z0, z1) = room
    return [
        Surface("floor", 2, float(z0), reflection),
        Surface("ceiling", 2, float(z1), reflection),
        Surface("wall-xmin", 0, float(x0), reflection),
        Surface("wall-xmax", 0, float(x1), reflection),
        Surface("wall-ymin", 1, float(y0), reflection),
        Surface("wall-ymax", 1, float(y1), reflection),
    ]


@dataclass
class Scene:
    """Room, terminal positions, surfaces, blockage flags, carrier frequency."""

    room: tuple
    bs: np.ndarray
    ris: np.ndarray
    ms: np.ndarray
    surfaces: list = field(default_factory=list)
    blockage: dict = field(default_factory=dict)
    carrier_frequency: float = 60e9
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        self.room = tuple((float(lo), float(hi)) for lo, hi in self.room)
        if len(self.room) != 3:
            raise ConfigError("room must give (min, max) extents for x, y and z")
        for lo, hi in self.room:
            if not hi > lo:
                raise ConfigError("room extents must satisfy max > min on every axis")
        self.bs = np.asarray(self.bs, dtype=float)
        self.ris = np.asarray(self.ris, dtype=float)
        self.ms = np.asarray(self.ms, dtype=float)
        for label, p in (("bs", self.bs), ("ris", self.ris), ("ms", self.ms)):
            if p.shape != (3,):
                raise ConfigError(f"{label} position must be a 3-vector")
            for axis, (lo, hi) in enumerate(self.room):
                if not (lo <= p[axis] <= hi):
                    raise ConfigError(
                        f"{label} position {p.tolist()} leaves the room on axis {_AXIS_NAMES[axis]}"
                    )
        if not self.surfaces:
            self.surfaces = default_surfaces(self.room)
        base = {"bm": False, "br": False, "rm": False}
        base.update(self.blockage or {})
        unknown = set(base) - {"bm", "br", "rm"}
        if unknown:
            raise ConfigError(f"unknown blockage keys {sorted(unknown)}")
        self.blockage = base
        if self.carrier_frequency <= 0:
            raise ConfigError("carrier frequency must be positive")

    @property
    def wavelength(self) -> float:
        return self.c / self.carrier_frequency

    def to_dict(self) -> dict:
        return {
            "room": [list(ext) for ext in self.room],
            "bs": self.bs.tolist(),
            "ris": self.ris.tolist(),
            "ms": self.ms.tolist(),
            "surfaces": [
                {
                    "name": s.name,
                    "axis": s.axis,
                    "offset": s.offset,
                    "reflection": [s.reflection.real, s.reflection.imag],
                }
                for s in self.surfaces
            ],
            "blockage": dict(self.blockage),
            "fc": self.carrier_frequency,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        try:
            surfaces = [
                Surface(
                    name=s["name"],
                    axis=int(s["axis"]),
                    offset=float(s["offset"]),
                    reflection=complex(s["reflection"][0], s["reflection"][1]),
                )
                for s in data.get("surfaces", [])
            ]
            return cls(
                room=tuple(tuple(ext) for ext in data["room"]),
                bs=data["bs"],
                ris=data["ris"],
                ms=data["ms"],
                surfaces=surfaces,
                blockage=data.get("blockage", {}),
                carrier_frequency=float(data["fc"]),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"malformed scene description: {exc!r}") from exc

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "Scene":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _free_space_gain(length: float, wavelength: float, c: float) -> complex:
    # amplitude lambda / (4 pi d), phase from the carrier at the path delay
    tau = length / c
    return (wavelength / (4.0 * math.pi * length)) * np.exp(-2j * math.pi * (c / wavelength) * tau)


def trace_paths(
    scene: Scene,
    tx,
    rx,
    blocked_los: bool = False,
    surfaces: Optional[Sequence[Surface]] = None,
) -> list[PropagationPath]:
    """LoS plus first-order specular reflections between two points.

    Reflections are generated with the image-source construction: the
    receiver is mirrored across each surface plane and the path is kept when
    the mirrored segment crosses the plane strictly between the endpoints
    inside the room footprint. Surfaces containing either endpoint are
    skipped. Returned paths are sorted by delay.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    wavelength = scene.wavelength
    paths = []

    direct = rx - tx
    dist = float(np.linalg.norm(direct))
    if dist == 0.0:
        raise DegenerateGeometry("transmitter and receiver coincide")
    if not blocked_los:
        paths.append(
            PropagationPath(
                gain=_free_space_gain(dist, wavelength, scene.c),
                departure=DirectionVector.from_array(direct / dist),
                arrival=DirectionVector.from_array(-direct / dist),
                delay=dist / scene.c,
                label="los",
            )
        )

    for surface in surfaces if surfaces is not None else scene.surfaces:
        a = surface.axis
        # endpoints on the plane produce no distinct specular path
        if abs(tx[a] - surface.offset) < 1e-9 or abs(rx[a] - surface.offset) < 1e-9:
            continue
        # a first-order specular bounce needs both endpoints on one side
        if (tx[a] - surface.offset) * (rx[a] - surface.offset) < 0.0:
            continue
        rx_img = surface.mirror(rx)
        seg = rx_img - tx
        length = float(np.linalg.norm(seg))
        if length < 1e-12:
            raise DegenerateGeometry(f"image path via {surface.name} has zero length")
        t_star = (surface.offset - tx[a]) / seg[a]
        if not (0.0 < t_star < 1.0):
            continue
        hit = tx + t_star * seg
        inside = all(
            lo - 1e-9 <= hit[axis] <= hi + 1e-9
            for axis, (lo, hi) in enumerate(scene.room)
            if axis != a
        )
        if not inside:
            continue
        tx_img = surface.mirror(tx)
        paths.append(
            PropagationPath(
                gain=_free_space_gain(length, wavelength, scene.c) * surface.reflection,
                departure=DirectionVector.from_array(seg / length),
                arrival=DirectionVector.from_array((tx_img - rx) / length),
                delay=length / scene.c,
                label=surface.name,
            )
        )

    paths.sort(key=lambda p: p.delay)
    return paths


@dataclass
class ChannelTaps:
    """Sampled channel tensor, shape (taps, rx elements, tx elements)."""

    taps: np.ndarray
    clock_offset: float

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=complex)
        if self.taps.ndim != 3:
            raise ShapeMismatch(f"tap tensor must be 3-d, got shape {self.taps.shape}")

    @property
    def tap_count(self) -> int:
        return self.taps.shape[0]

    def energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))


def _keep_relative_delay(rel: float, pulse: PulseShape, label: str) -> bool:
    # drop paths whose pulse center falls outside the sampled tap window
    if rel >= pulse.window:
        warnings.warn(
            f"path '{label}' at relative delay {rel:.3e} s falls beyond the "
            f"{pulse.tap_count}-tap window and was dropped",
            stacklevel=3,
        )
        return False
    if rel < -0.5 * pulse.sample_period:
        warnings.warn(
            f"path '{label}' at relative delay {rel:.3e} s precedes the tap "
            "window and was dropped",
            stacklevel=3,
        )
        return False
    return True


def assemble_bm_taps(
    paths: Iterable[PropagationPath],
    bs_geom: UpaGeometry,
    ms_geom: UpaGeometry,
    pulse: PulseShape,
    clock_offset: float,
) -> ChannelTaps:
    """Direct BS-to-MS channel taps.

    Tap d holds sum_l gain_l * a_ms(arrival_l) a_bs(departure_l)^H *
    pulse(d T_s + t0 - delay_l).
    """
    taps = np.zeros((pulse.tap_count, ms_geom.size, bs_geom.size), dtype=complex)
    for path in paths:
        rel = path.delay - clock_offset
        if not _keep_relative_delay(rel, pulse, path.label):
            continue
        pvec = pulse_delay_vector(rel, pulse)
        rank_one = np.outer(
            upa_response(path.arrival, ms_geom),
            np.conj(upa_response(path.departure, bs_geom)),
        )
        taps += path.gain * pvec[:, None, None] * rank_one[None, :, :]
    return ChannelTaps(taps, clock_offset)


def assemble_brm_taps(
    bs_ris_paths: Iterable[PropagationPath],
    ris_ms_paths: Iterable[PropagationPath],
    ris_phase: np.ndarray,
    bs_geom: UpaGeometry,
    ris_geom: UpaGeometry,
    ms_geom: UpaGeometry,
    pulse: PulseShape,
    clock_offset: float,
) -> ChannelTaps:
    """Cascaded BS-RIS-MS channel taps for one RIS phase configuration.

    Every (BS-RIS, RIS-MS) path pair contributes the product of segment
    gains, the scalar RIS coupling a_ris(dep)^H diag(phase) a_ris(arr), and a
    rank-one outer product between the MS arrival and BS departure steering
    vectors, all placed at the summed segment delay.
    """
    ris_phase = np.asarray(ris_phase, dtype=complex)
    if ris_phase.shape != (ris_geom.size,):
        raise ShapeMismatch(
            f"RIS phase vector has shape {ris_phase.shape}, expected ({ris_geom.size},)"
        )
    if np.max(np.abs(np.abs(ris_phase) - 1.0)) > 1e-9:
        raise NonUnitModulus("RIS phase entries must have unit modulus")

    taps = np.zeros((pulse.tap_count, ms_geom.size, bs_geom.size), dtype=complex)
    for p in bs_ris_paths:
        a_ris_in = upa_response(p.arrival, ris_geom)
        a_bs_dep = upa_response(p.departure, bs_geom)
        for q in ris_ms_paths:
            rel = p.delay + q.delay - clock_offset
            if not _keep_relative_delay(rel, pulse, f"{p.label}+{q.label}"):
                continue
            coupling = np.vdot(upa_response(q.departure, ris_geom), ris_phase * a_ris_in)
            pvec = pulse_delay_vector(rel, pulse)
            rank_one = np.outer(upa_response(q.arrival, ms_geom), np.conj(a_bs_dep))
            taps += (q.gain * p.gain * coupling) * pvec[:, None, None] * rank_one[None, :, :]
    return ChannelTaps(taps, clock_offset)


def overall_taps(bm: ChannelTaps, brm: ChannelTaps) -> ChannelTaps:
    """Elementwise sum of the direct and cascaded channels."""
    if bm.taps.shape != brm.taps.shape:
        raise ShapeMismatch(
            f"tap tensors disagree: {bm.taps.shape} vs {brm.taps.shape}"
        )
    if bm.clock_offset != brm.clock_offset:
        raise ShapeMismatch("tap tensors were assembled with different clock offsets")
    return ChannelTaps(bm.taps + brm.taps, bm.clock_offset)


PATH_CSV_FIELDS = (
    "source",
    "gain_re",
    "gain_im",
    "phi_x",
    "phi_y",
    "phi_z",
    "theta_x",
    "theta_y",
    "theta_z",
    "tau_s",
    "label",
)


def write_paths_csv(path, rows: Iterable[tuple[str, PropagationPath]]) -> None:
    """Dump (source tag, path) pairs using the standard column layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATH_CSV_FIELDS)
        for source, p in rows:
            # plain floats round-trip exactly through repr; numpy scalars do not
            writer.writerow(
                [
                    source,
                    repr(float(p.gain.real)),
                    repr(float(p.gain.imag)),
                    repr(float(p.departure.x)),
                    repr(float(p.departure.y)),
                    repr(float(p.departure.z)),
                    repr(float(p.arrival.x)),
                    repr(float(p.arrival.y)),
                    repr(float(p.arrival.z)),
                    repr(float(p.delay)),
                    p.label,
                ]
            )


def read_paths_csv(path) -> list[tuple[str, PropagationPath]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                (
                    rec["source"],
                    PropagationPath(
                        gain=complex(float(rec["gain_re"]), float(rec["gain_im"])),
                        departure=DirectionVector(
                            float(rec["phi_x"]), float(rec["phi_y"]), float(rec["phi_z"])
                        ),
                        arrival=DirectionVector(
                            float(rec["theta_x"]), float(rec["theta_y"]), float(rec["theta_z"])
                        ),
                        delay=float(rec["tau_s"]),
                        label=rec["label"],
                    ),
                )
            )
    return rows
