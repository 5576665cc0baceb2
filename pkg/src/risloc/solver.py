"""Greedy multidimensional sparse recovery over two measurement sources.

Each extraction step searches for the dictionary multi-index whose composite
atom (sensing tensor contracted with one column from every per-dimension
dictionary) has the largest normalized correlation with the residual. The
search never enumerates the full index grid: it alternates over dimensions,
sweeping one dictionary at a time with the other dimensions held fixed.
Both sources compete at every step; after a selection, all coefficient rows
are re-solved jointly by least squares and the residual is updated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .arrays import resolve_direction_z
from .dictionaries import SOURCE_BM, MultiDictionary, SensingOperator
from .errors import EmptyInput, NoProgress, ShapeMismatch
from .sounding import ObservationBlock

_ZERO_NORM = 1e-300


@dataclass(frozen=True)
class SupportEntry:
    """One selected atom: source tag plus per-dimension grid indices."""

    source: str
    index: tuple[int, int, int]


@dataclass
class MompResult:
    """Support, jointly solved coefficient rows, and residual history."""

    support: list
    coefficients: np.ndarray  # (len(support), observation columns)
    residual_norms: list  # Frobenius norms, starting at the raw observation
    iterations: int


@dataclass
class PathEstimate:
    """Physical reading of one support entry."""

    source: str
    phi_x: float
    phi_y: float
    phi_z: float
    relative_delay: float
    gain: float
    index: tuple[int, int, int]


class _SourceWork:
    """Cached reshapes and aggregates for one (operator, dictionary) pair."""

    def __init__(self, op: SensingOperator, dic: MultiDictionary):
        if op.source != dic.source:
            raise ShapeMismatch(
                f"operator source {op.source!r} does not match dictionary {dic.source!r}"
            )
        if op.n_x != dic.psi1.shape[0] or op.n_y != dic.psi2.shape[0]:
            raise ShapeMismatch("operator and dictionary disagree on the transmit grid")
        self.op = op
        self.dic = dic
        self.tag = op.source
        self.frames = op.frames
        self.n_symbols = op.n_symbols
        self.stacked = op.time_products.reshape(
            op.frames, op.n_x, op.n_y, op.n_symbols
        )
        self.grid_total = int(np.prod(dic.atom_counts))
        # initialization columns: other dimensions aggregated uniformly
        self.agg = (
            dic.psi1.mean(axis=1),
            dic.psi2.mean(axis=1),
            dic.psi3.mean(axis=1),
        )

    def column(self, dim: int, j: int) -> np.ndarray:
        return (self.dic.psi1, self.dic.psi2, self.dic.psi3)[dim][:, j]

    def _mixer(self, psi3_col: np.ndarray) -> np.ndarray:
        """(N, N) causal banded Toeplitz realizing the delay signature."""
        n = self.n_symbols
        taps = len(psi3_col)
        mix = np.zeros((n, n), dtype=psi3_col.dtype)
        for d in range(min(taps, n)):
            idx = np.arange(n - d)
            mix[idx + d, idx] = psi3_col[d]
        return mix

    def candidate_matrix(self, dim: int, fixed: Sequence[np.ndarray]) -> np.ndarray:
        """All composite atoms along one dimension, others fixed.

        Returns a (frames * n_symbols, atoms_dim) matrix whose column j is
        the composite atom with dictionary column j in dimension ``dim``.
        """
        c1, c2, c3 = fixed
        if dim == 2:
            z = np.einsum("mxyn,x,y->mn", self.stacked, c1, c2)
            taps = self.dic.psi3.shape[0]
            n = self.n_symbols
            shifted = np.zeros((self.frames, taps, n), dtype=complex)
            for d in range(min(taps, n)):
                shifted[:, d, d:] = z[:, : n - d]
            atoms = np.einsum("mdn,dj->mnj", shifted, self.dic.psi3)
        else:
            mixer = self._mixer(c3)
            if dim == 0:
                t = np.einsum("mxyn,y->mxn", self.stacked, c2)
                t = t @ mixer.T
                atoms = np.einsum("xj,mxn->mnj", self.dic.psi1, t)
            else:
                t = np.einsum("mxyn,x->myn", self.stacked, c1)
                t = t @ mixer.T
                atoms = np.einsum("yj,myn->mnj", self.dic.psi2, t)
        return atoms.reshape(self.frames * self.n_symbols, -1)

    def composite_atom(self, index: Sequence[int]) -> np.ndarray:
        j1, j2, j3 = index
        z = np.einsum(
            "mxyn,x,y->mn", self.stacked, self.column(0, j1), self.column(1, j2)
        )
        return (z @ self._mixer(self.column(2, j3)).T).reshape(-1)

    def best_index(
        self, residual: np.ndarray, max_sweeps: int
    ) -> tuple[Optional[tuple[int, int, int]], float]:
        """Alternating per-dimension maximization of normalized correlation.

        The first pass visits dimensions in order, using the uniform
        aggregates for dimensions not chosen yet; subsequent sweeps refine
        until the index tuple is stable or the sweep limit is reached.
        Returns (index, score); index is None when every candidate atom had
        zero norm.
        """
        chosen: list[Optional[int]] = [None, None, None]
        cols = list(self.agg)
        score = -np.inf
        for sweep in range(max_sweeps):
            changed = False
            for dim in range(3):
                cands = self.candidate_matrix(dim, cols)
                norms = np.linalg.norm(cands, axis=0)
                valid = norms > _ZERO_NORM
                if not np.any(valid):
                    return None, -np.inf
                corr = np.linalg.norm(cands.conj().T @ residual, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    scores = np.where(valid, corr / norms, -np.inf)
                j = int(np.argmax(scores))
                score = float(scores[j])
                if chosen[dim] != j:
                    chosen[dim] = j
                    cols[dim] = self.column(dim, j)
                    changed = True
            if not changed:
                break
        return (chosen[0], chosen[1], chosen[2]), score

    def exact_best_index(
        self, residual: np.ndarray
    ) -> tuple[Optional[tuple[int, int, int]], float]:
        """Exhaustive argmax of the normalized correlation over the grid.

        Alternating ascent can stall on a local maximum when the
        per-dimension dictionaries are short and coherent, so small grids
        are enumerated instead. The scan runs in C index order with strict
        improvement, keeping the smallest multi-index on exact ties.
        """
        a1 = self.dic.psi1.shape[1]
        a2 = self.dic.psi2.shape[1]
        best_idx: Optional[tuple[int, int, int]] = None
        best_score = -np.inf
        for j1 in range(a1):
            c1 = self.column(0, j1)
            for j2 in range(a2):
                cands = self.candidate_matrix(2, (c1, self.column(1, j2), self.agg[2]))
                norms = np.linalg.norm(cands, axis=0)
                valid = norms > _ZERO_NORM
                if not np.any(valid):
                    continue
                corr = np.linalg.norm(cands.conj().T @ residual, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    scores = np.where(valid, corr / norms, -np.inf)
                j3 = int(np.argmax(scores))
                if scores[j3] > best_score:
                    best_idx = (j1, j2, int(j3))
                    best_score = float(scores[j3])
        return best_idx, best_score


def _as_matrix(observation) -> np.ndarray:
    if isinstance(observation, ObservationBlock):
        return observation.matrix
    return np.asarray(observation, dtype=complex)


def momp_estimate(
    observation,
    sources: Sequence[tuple[SensingOperator, MultiDictionary]],
    max_paths: int = 10,
    residual_tol: float = 1e-3,
    max_sweeps: int = 3,
    exact_threshold: int = 4096,
) -> MompResult:
    """Extract a sparse support from the observation across all sources.

    Selection picks the source and multi-index with the largest normalized
    residual correlation, ties going to the lexicographically first source
    tag and then the lexicographically smallest index. Sources whose index
    grid holds at most ``exact_threshold`` atoms are searched exhaustively;
    larger grids use alternating ascent with at most ``max_sweeps`` sweeps.
    Extraction stops at ``max_paths`` entries, when the residual is
    exhausted, or when the last iteration reduced the residual norm by less
    than ``residual_tol`` relative.
    """
    matrix = _as_matrix(observation)
    if matrix.ndim != 2:
        raise ShapeMismatch("observation must be a matrix")
    if not sources:
        raise EmptyInput("at least one (operator, dictionary) pair is required")
    works = sorted((_SourceWork(op, dic) for op, dic in sources), key=lambda w: w.tag)
    rows = works[0].frames * works[0].n_symbols
    for w in works:
        if w.frames * w.n_symbols != matrix.shape[0]:
            raise ShapeMismatch(
                f"source {w.tag!r} spans {w.frames * w.n_symbols} rows, "
                f"observation has {matrix.shape[0]}"
            )
    del rows

    support: list[SupportEntry] = []
    atoms: list[np.ndarray] = []
    coeffs = np.zeros((0, matrix.shape[1]), dtype=complex)
    residual = matrix.copy()
    norms = [float(np.linalg.norm(matrix))]
    seen = set()

    while len(support) < max_paths:
        prev = norms[-1]
        if prev <= _ZERO_NORM:
            break
        best_tag = None
        best_idx = None
        best_score = -np.inf
        for w in works:  # tag-sorted, so ties keep the first source
            if w.grid_total <= exact_threshold:
                idx, score = w.exact_best_index(residual)
            else:
                idx, score = w.best_index(residual, max_sweeps)
            if idx is not None and score > best_score:
                best_tag, best_idx, best_score = w.tag, idx, score
        if best_tag is None:
            raise NoProgress("every candidate atom has zero norm")
        if (best_tag, best_idx) in seen:
            # residual is orthogonal to selected atoms; re-selection means
            # nothing new can be explained
            break
        seen.add((best_tag, best_idx))
        work = next(w for w in works if w.tag == best_tag)
        atoms.append(work.composite_atom(best_idx))
        support.append(SupportEntry(source=best_tag, index=tuple(best_idx)))

        basis = np.column_stack(atoms)
        coeffs, *_ = np.linalg.lstsq(basis, matrix, rcond=None)
        residual = matrix - basis @ coeffs
        norms.append(float(np.linalg.norm(residual)))
        if (prev - norms[-1]) < residual_tol * prev:
            break

    return MompResult(
        support=support,
        coefficients=coeffs,
        residual_norms=norms,
        iterations=len(support),
    )


def extract_path_estimates(
    result_or_support,
    coefficients: Optional[np.ndarray],
    dictionaries: Mapping[str, MultiDictionary],
    bs_ris_delay: float = 0.0,
    z_sign: Union[int, Mapping[str, int]] = -1,
    skip_invalid: bool = False,
) -> list[PathEstimate]:
    """Map support entries to physical path parameters.

    Angular grid values become departure cosines with the z component
    resolved through the scene sign prior. Delay grid values are relative to
    the receiver clock; cascaded entries additionally subtract the known
    BS-to-RIS segment delay so they describe the RIS-to-MS leg. The gain is
    the 2-norm of the coefficient row. With ``skip_invalid`` set, entries
    whose planar cosines leave the unit disk are dropped instead of raising.
    """
    if isinstance(result_or_support, MompResult):
        support = result_or_support.support
        coefficients = result_or_support.coefficients
    else:
        support = result_or_support
    if coefficients is None or len(coefficients) != len(support):
        raise ShapeMismatch("need one coefficient row per support entry")

    estimates = []
    for entry, row in zip(support, coefficients):
        dic = dictionaries[entry.source]
        j1, j2, j3 = entry.index
        phi_x = float(dic.angle_x.values[j1])
        phi_y = float(dic.angle_y.values[j2])
        sign = z_sign[entry.source] if isinstance(z_sign, Mapping) else z_sign
        try:
            direction = resolve_direction_z(phi_x, phi_y, sign)
        except Exception:
            if skip_invalid:
                continue
            raise
        rel = float(dic.delays.values[j3])
        if entry.source != SOURCE_BM:
            rel -= bs_ris_delay
        estimates.append(
            PathEstimate(
                source=entry.source,
                phi_x=direction.x,
                phi_y=direction.y,
                phi_z=direction.z,
                relative_delay=rel,
                gain=float(np.linalg.norm(row)),
                index=(j1, j2, j3),
            )
        )
    return estimates


def predict_observation(
    support: Sequence[SupportEntry],
    coefficients: np.ndarray,
    sources: Sequence[tuple[SensingOperator, MultiDictionary]],
    columns: Optional[int] = None,
) -> np.ndarray:
    """Reassemble the observation explained by a support and its rows."""
    works = {w.tag: w for w in (_SourceWork(op, dic) for op, dic in sources)}
    if len(support) != len(coefficients):
        raise ShapeMismatch("need one coefficient row per support entry")
    if len(support) == 0:
        if columns is None:
            raise ShapeMismatch("cannot infer the observation shape from an empty support")
        any_work = next(iter(works.values()))
        return np.zeros((any_work.frames * any_work.n_symbols, columns), dtype=complex)
    out = None
    for entry, row in zip(support, coefficients):
        atom = works[entry.source].composite_atom(entry.index)
        term = np.outer(atom, row)
        out = term if out is None else out + term
    return out


def observation_nmse(predicted: np.ndarray, reference: np.ndarray) -> float:
    """Normalized mean squared error between two observation matrices."""
    ref_energy = float(np.linalg.norm(reference) ** 2)
    err = float(np.linalg.norm(predicted - reference) ** 2)
    if ref_energy == 0.0:
        return 0.0 if err == 0.0 else np.inf
    return err / ref_energy
