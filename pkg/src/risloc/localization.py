"""Geometric localization from estimated paths, without absolute timing.

All delays coming out of the estimator are relative to an unknown receiver
clock offset t0. Two strategies recover it. With a single anchor, first-order
reflections constrain t0: a floor or ceiling bounce preserves the horizontal
distance, so its horizontal direction fraction h satisfies
h_l (dtau_l + t0) = h_los (dtau_los + t0); a wall bounce preserves the
vertical drop, giving the same relation through the z cosines. Each labeled
reflection yields a closed-form candidate and the median survives outliers.
With two anchors (BS and RIS), equating the two ray equations for the same
terminal gives a linear least-squares problem in t0 alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .arrays import SPEED_OF_LIGHT
from .errors import (
    DegenerateGeometry,
    EmptyInput,
    NegativeDelay,
    NoLoSPath,
    ParallelGeometry,
    UnderDetermined,
)
from .solver import PathEstimate

FLOOR_LIKE = "floor-ceiling"
WALL_LIKE = "wall"
DISCARDED = "discarded"

_DEFAULT_AZ_TOL = 1e-2
_DEFAULT_DENOM_TOL = 1e-6
_DEFAULT_CONSISTENCY_ATOL = 1e-9  # seconds, guards the 3*MAD test near zero spread


@dataclass(frozen=True)
class AnchorSet:
    """Known anchor positions shared by the estimators."""

    bs: np.ndarray
    ris: np.ndarray
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        object.__setattr__(self, "bs", np.asarray(self.bs, dtype=float))
        object.__setattr__(self, "ris", np.asarray(self.ris, dtype=float))


@dataclass
class LabeledPath:
    """A non-LoS estimate with its surface class and clock-offset candidate."""

    estimate: PathEstimate
    label: str
    t0_candidate: Optional[float]


@dataclass
class PositionFix:
    """Localization output: position, clock offset, method, residual."""

    position: np.ndarray
    clock_offset: float
    method: str
    anchor: str
    residual: float


def designate_los(estimates: Sequence[PathEstimate]) -> PathEstimate:
    """Pick the line-of-sight estimate: minimum relative delay, then gain."""
    if not estimates:
        raise NoLoSPath("no path estimates to designate a line of sight from")
    return min(estimates, key=lambda e: (e.relative_delay, -e.gain))


def _direction(e: PathEstimate) -> np.ndarray:
    return np.array([e.phi_x, e.phi_y, e.phi_z])


def _offset_candidate(a_los, dt_los, a_path, dt_path, denom_tol):
    """Closed-form t0 from a_path (dt_path + t0) = a_los (dt_los + t0)."""
    denom = a_path - a_los
    if abs(denom) < denom_tol:
        return None
    t0 = (a_los * dt_los - a_path * dt_path) / denom
    # a candidate implying a non-positive absolute delay is unphysical
    if dt_los + t0 <= 0.0 or dt_path + t0 <= 0.0:
        return None
    return float(t0)


def classify_nlos_paths(
    paths: Iterable[PathEstimate],
    los: PathEstimate,
    az_tol: float = _DEFAULT_AZ_TOL,
    denom_tol: float = _DEFAULT_DENOM_TOL,
    consistency_atol: float = _DEFAULT_CONSISTENCY_ATOL,
) -> list[LabeledPath]:
    """Label reflections as floor/ceiling-like, wall-like, or discarded.

    A path sharing the LoS azimuth (within ``az_tol`` on the normalized
    planar inner product) is floor/ceiling-like and its candidate uses the
    horizontal fractions. Remaining paths get a wall candidate from the z
    cosines, accepted only while consistent with the floor-derived candidate
    pool: within 3 median-absolute-deviations of the pool median (the wall
    pool itself when no floor candidate exists).
    """
    h_los = math.hypot(los.phi_x, los.phi_y)
    labeled: list[LabeledPath] = []
    wall_pending: list[int] = []

    for est in paths:
        if est is los:
            continue
        h = math.hypot(est.phi_x, est.phi_y)
        planar = est.phi_x * los.phi_x + est.phi_y * los.phi_y
        aligned = False
        if h > 0.0 and h_los > 0.0:
            aligned = planar / (h * h_los) >= 1.0 - az_tol
        if aligned:
            cand = _offset_candidate(
                h_los, los.relative_delay, h, est.relative_delay, denom_tol
            )
            labeled.append(LabeledPath(est, FLOOR_LIKE, cand))
        else:
            cand = _offset_candidate(
                los.phi_z, los.relative_delay, est.phi_z, est.relative_delay, denom_tol
            )
            labeled.append(LabeledPath(est, WALL_LIKE, cand))
            wall_pending.append(len(labeled) - 1)

    floor_pool = [
        lp.t0_candidate for lp in labeled if lp.label == FLOOR_LIKE and lp.t0_candidate is not None
    ]
    wall_pool = [
        labeled[i].t0_candidate for i in wall_pending if labeled[i].t0_candidate is not None
    ]
    pool = floor_pool if floor_pool else wall_pool
    if pool:
        center = float(np.median(pool))
        spread = float(np.median(np.abs(np.asarray(pool) - center)))
        accept = max(3.0 * spread, consistency_atol)
        for i in wall_pending:
            cand = labeled[i].t0_candidate
            if cand is None or abs(cand - center) > accept:
                labeled[i] = LabeledPath(labeled[i].estimate, DISCARDED, None)
    else:
        for i in wall_pending:
            labeled[i] = LabeledPath(labeled[i].estimate, DISCARDED, None)
    return labeled


def estimate_clock_offset_single(
    labeled: Sequence[LabeledPath],
    los: PathEstimate,
) -> float:
    """Median of surviving clock-offset candidates from one anchor."""
    del los  # candidates already encode the LoS constraint
    candidates = [
        lp.t0_candidate
        for lp in labeled
        if lp.label in (FLOOR_LIKE, WALL_LIKE) and lp.t0_candidate is not None
    ]
    if not candidates:
        raise UnderDetermined("no usable clock-offset candidates")
    return float(np.median(candidates))


def locate_single_los(
    anchor: np.ndarray,
    los: PathEstimate,
    clock_offset: float,
    anchor_name: str = "bm",
    c: float = SPEED_OF_LIGHT,
) -> PositionFix:
    """Place the terminal along the LoS ray at the recovered absolute delay.

    ``anchor_name`` is the link tag ("bm" for the BS anchor, "rm" for the
    RIS anchor) and becomes the method suffix.
    """
    anchor = np.asarray(anchor, dtype=float)
    absolute = los.relative_delay + clock_offset
    if absolute <= 0.0:
        raise NegativeDelay(
            f"absolute line-of-sight delay {absolute:.3e} s is not positive"
        )
    position = anchor + c * absolute * _direction(los)
    return PositionFix(
        position=position,
        clock_offset=float(clock_offset),
        method=f"one-los-{anchor_name}",
        anchor={"bm": "bs", "rm": "ris"}.get(anchor_name, anchor_name),
        residual=0.0,
    )


def locate_dual_los(
    anchors: AnchorSet,
    bm_los: PathEstimate,
    rm_los: PathEstimate,
) -> PositionFix:
    """Intersect the BS and RIS line-of-sight rays sharing one clock offset.

    Solves min_t0 || bs - ris + c (dt_bm phi_bm - dt_rm phi_rm)
    + t0 c (phi_bm - phi_rm) ||; the position follows from the anchor whose
    path carries the larger gain. The residual is the remaining mismatch
    between the two ray endpoints.
    """
    c = anchors.c
    phi_bm = _direction(bm_los)
    phi_rm = _direction(rm_los)
    e = c * (phi_bm - phi_rm)
    if np.linalg.norm(phi_bm - phi_rm) < 1e-9:
        raise ParallelGeometry("anchor rays are parallel; clock offset unobservable")
    d = (
        anchors.ris
        - anchors.bs
        + c * (rm_los.relative_delay * phi_rm - bm_los.relative_delay * phi_bm)
    )
    t0 = float(np.dot(d, e) / np.dot(e, e))
    residual = float(np.linalg.norm(d - t0 * e))

    tau_bm = bm_los.relative_delay + t0
    tau_rm = rm_los.relative_delay + t0
    if tau_bm <= 0.0 or tau_rm <= 0.0:
        raise NegativeDelay("recovered absolute delays are not positive")
    if bm_los.gain >= rm_los.gain:
        position = anchors.bs + c * tau_bm * phi_bm
        anchor_name = "bs"
    else:
        position = anchors.ris + c * tau_rm * phi_rm
        anchor_name = "ris"
    return PositionFix(
        position=position,
        clock_offset=t0,
        method="two-los",
        anchor=anchor_name,
        residual=residual,
    )


def single_anchor_fix(
    anchor: np.ndarray,
    estimates: Sequence[PathEstimate],
    anchor_name: str,
    az_tol: float = _DEFAULT_AZ_TOL,
    c: float = SPEED_OF_LIGHT,
) -> PositionFix:
    """Full one-anchor pipeline: designate LoS, classify, solve, place."""
    los = designate_los(list(estimates))
    labeled = classify_nlos_paths(estimates, los, az_tol=az_tol)
    t0 = estimate_clock_offset_single(labeled, los)
    return locate_single_los(anchor, los, t0, anchor_name=anchor_name, c=c)
