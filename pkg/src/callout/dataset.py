"""Uniform, counted access to pairwise distances.

A :class:`MetricDataset` wraps either a feature matrix plus a metric, or a
precomputed distance matrix, behind one interface, so the index and the
rankings never care where a distance came from. Every off-diagonal distance
evaluation is counted in both modes (matrix lookups included), which keeps
scaling measurements comparable across modes.

Counting convention: one unordered pair evaluated once is one call. The
batch helpers (:meth:`MetricDataset.distances`, :meth:`MetricDataset.pairwise`)
count each distinct off-diagonal pair they evaluate exactly once.
"""

from __future__ import annotations

import csv
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import InputError

# How closely a loaded distance matrix must match its transpose / zero diagonal.
MATRIX_TOLERANCE = 1e-9


def euclidean_distance(a, b) -> float:
    """L2 distance between two equal-length vectors.

    Raises
    ------
    ValueError
        If the vectors have different lengths (or are not 1-D).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape or a.size < 1:
        raise ValueError(
            f"euclidean_distance needs two equal-length vectors, got shapes {a.shape} and {b.shape}"
        )
    d = a - b
    return float(np.sqrt(np.dot(d, d)))


def manhattan_distance(a, b) -> float:
    """L1 distance between two equal-length vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape or a.size < 1:
        raise ValueError(
            f"manhattan_distance needs two equal-length vectors, got shapes {a.shape} and {b.shape}"
        )
    return float(np.abs(a - b).sum())


def _euclidean_rows(X: np.ndarray, i: int, ids: np.ndarray) -> np.ndarray:
    d = X[ids] - X[i]
    return np.sqrt((d * d).sum(axis=1))


def _manhattan_rows(X: np.ndarray, i: int, ids: np.ndarray) -> np.ndarray:
    return np.abs(X[ids] - X[i]).sum(axis=1)


class _Metric:
    __slots__ = ("name", "pair", "rows")

    def __init__(self, name, pair, rows=None):
        self.name = name
        self.pair = pair
        self.rows = rows


_METRICS: dict[str, _Metric] = {}


def register_metric(
    name: str,
    pair: Callable[[np.ndarray, np.ndarray], float],
    rows: Callable[[np.ndarray, int, np.ndarray], np.ndarray] | None = None,
) -> None:
    """Register a distance function under ``name``.

    ``pair(a, b)`` returns the distance between two feature vectors.
    ``rows(X, i, ids)``, if given, vectorizes distances from row ``i`` of
    ``X`` to rows ``ids``; without it, a per-pair fallback loop is used.
    The function must be a metric (symmetric, zero on identical inputs).
    """
    _METRICS[name] = _Metric(name, pair, rows)


register_metric("euclidean", euclidean_distance, _euclidean_rows)
register_metric("manhattan", manhattan_distance, _manhattan_rows)


class MetricDataset:
    """A collection of objects with a counted pairwise-distance oracle.

    Two modes:

    * feature mode: an (n, dim) float matrix plus a registered metric;
    * matrix mode: a validated (n, n) precomputed distance matrix.

    ``distance_calls`` is a monotone counter of off-diagonal distance
    evaluations. Reads are thread-safe; the counter total is exact under
    concurrent use.
    """

    def __init__(self, *, features=None, matrix=None, metric: str = "euclidean", labels=None):
        if (features is None) == (matrix is None):
            raise ValueError("exactly one of features/matrix must be given")
        self._labels = list(labels) if labels is not None else None
        self._lock = threading.Lock()
        self._calls = 0
        if features is not None:
            X = np.asarray(features, dtype=float)
            if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
                raise ValueError(f"features must be a non-empty 2-D array, got shape {X.shape}")
            if metric not in _METRICS:
                raise InputError(f"unknown metric {metric!r}; registered: {sorted(_METRICS)}")
            self._X = X
            self._D = None
            self._metric = _METRICS[metric]
            self.metric = metric
        else:
            D = _validate_distance_matrix(np.asarray(matrix, dtype=float))
            self._X = None
            self._D = D
            self._metric = None
            self.metric = "precomputed"
        n = self._X.shape[0] if self._X is not None else self._D.shape[0]
        if self._labels is not None and len(self._labels) != n:
            raise ValueError(f"{len(self._labels)} labels for {n} objects")

    @classmethod
    def from_features(cls, X, metric: str = "euclidean", labels=None) -> "MetricDataset":
        return cls(features=X, metric=metric, labels=labels)

    @classmethod
    def from_distance_matrix(cls, D, labels=None) -> "MetricDataset":
        return cls(matrix=D, labels=labels)

    @property
    def n(self) -> int:
        return self._X.shape[0] if self._X is not None else self._D.shape[0]

    @property
    def dim(self) -> int | None:
        """Feature dimensionality, or None in matrix mode."""
        return self._X.shape[1] if self._X is not None else None

    @property
    def mode(self) -> str:
        return "features" if self._X is not None else "matrix"

    @property
    def features(self) -> np.ndarray | None:
        return self._X

    @property
    def labels(self) -> list[str] | None:
        """Side-channel labels from the input file; never used in distances."""
        return self._labels

    @property
    def distance_calls(self) -> int:
        return self._calls

    def _count(self, k: int) -> None:
        if k:
            with self._lock:
                self._calls += k

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"object id {i} out of range [0, {self.n})")

    def distance(self, i: int, j: int) -> float:
        """d(x_i, x_j). Counts one call when i != j."""
        self._check_index(i)
        self._check_index(j)
        if i == j:
            return 0.0
        self._count(1)
        if self._D is not None:
            return float(self._D[i, j])
        return float(self._metric.pair(self._X[i], self._X[j]))

    def distances(self, i: int, ids: Sequence[int]) -> np.ndarray:
        """Distances from object ``i`` to each object in ``ids`` (vectorized).

        Counts one call per off-diagonal pair; positions where ids == i
        come back exactly 0.0 and are not counted.
        """
        self._check_index(i)
        ids = np.asarray(ids, dtype=int)
        if ids.size == 0:
            return np.empty(0, dtype=float)
        if ids.min() < 0 or ids.max() >= self.n:
            raise IndexError(f"object id out of range [0, {self.n})")
        self._count(int((ids != i).sum()))
        if self._D is not None:
            out = self._D[i, ids].astype(float, copy=True)
        elif self._metric.rows is not None:
            out = self._metric.rows(self._X, i, ids)
        else:
            out = np.array([self._metric.pair(self._X[i], self._X[j]) for j in ids], dtype=float)
        out[ids == i] = 0.0
        return out

    def pairwise(self, ids: Sequence[int]) -> np.ndarray:
        """Symmetric distance matrix among ``ids``.

        Each unordered pair is evaluated (and counted) once; the diagonal
        is exactly zero.
        """
        ids = np.asarray(ids, dtype=int)
        k = ids.size
        if k == 0:
            return np.empty((0, 0), dtype=float)
        if ids.min() < 0 or ids.max() >= self.n:
            raise IndexError(f"object id out of range [0, {self.n})")
        self._count(k * (k - 1) // 2)
        if self._D is not None:
            out = self._D[np.ix_(ids, ids)].astype(float, copy=True)
        elif self._metric.name == "euclidean":
            A = self._X[ids]
            diff = A[:, None, :] - A[None, :, :]
            out = np.sqrt((diff * diff).sum(axis=2))
        else:
            out = np.zeros((k, k), dtype=float)
            for a in range(k):
                for b in range(a + 1, k):
                    d = self._metric.pair(self._X[ids[a]], self._X[ids[b]])
                    out[a, b] = d
                    out[b, a] = d
        np.fill_diagonal(out, 0.0)
        return out


def _validate_distance_matrix(D: np.ndarray) -> np.ndarray:
    """Validate symmetry / zero diagonal / non-negativity, then symmetrize.

    Entries may disagree with their transpose by up to MATRIX_TOLERANCE
    (text round-trip noise); accepted matrices are averaged with their
    transpose so stored distances are exactly symmetric.
    """
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError(f"distance matrix must be square, got shape {D.shape}")
    if D.shape[0] < 1:
        raise InputError("empty distance matrix")
    neg = np.argwhere(D < 0)
    if neg.size:
        i, j = neg[0]
        raise InputError(f"negative distance {D[i, j]} at ({i}, {j})")
    asym = np.abs(D - D.T)
    if asym.max() > MATRIX_TOLERANCE:
        i, j = np.unravel_index(int(np.argmax(asym)), D.shape)
        raise InputError(
            f"asymmetric distance matrix: ({i},{j})={D[i, j]} but ({j},{i})={D[j, i]}"
        )
    diag = np.abs(np.diagonal(D))
    if diag.max() > MATRIX_TOLERANCE:
        i = int(np.argmax(diag))
        raise InputError(f"nonzero diagonal entry {D[i, i]} at ({i},{i})")
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _parse_numeric(rows: list[list[str]], path, first_line: int, n_cols: int) -> np.ndarray:
    """Parse rows into floats; on failure, point at the offending cell."""
    try:
        return np.array(rows, dtype=float)
    except ValueError:
        pass
    for r, row in enumerate(rows):
        if len(row) != n_cols:
            raise InputError(
                f"{path}: line {first_line + r} has {len(row)} values, expected {n_cols}"
            )
        for c, cell in enumerate(row):
            if not _is_float(cell):
                raise InputError(
                    f"{path}: non-numeric value {cell.strip()!r} at line {first_line + r}, column {c + 1}"
                )
    raise InputError(f"{path}: malformed numeric data")  # pragma: no cover


def load_dataset(path, *, distance_matrix: bool = False, metric: str = "euclidean") -> MetricDataset:
    """Load a feature CSV or a distance-matrix file into a MetricDataset.

    Feature CSV: comma-separated, optional header row; all columns numeric
    except an optional trailing column named ``label`` (values
    inlier|global|local|collective or 0/1), which is stripped into
    ``MetricDataset.labels`` and never influences distances.

    Distance-matrix file: n lines of n comma-separated non-negative reals,
    symmetric within 1e-9 with a zero diagonal.
    """
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty input")
    if distance_matrix:
        n = len(rows)
        D = _parse_numeric(rows, path, 1, n_cols=n)
        if D.shape != (n, n):
            raise InputError(f"{path}: expected an {n}x{n} matrix, got shape {D.shape}")
        return MetricDataset(matrix=D)

    header: list[str] | None = None
    if not all(_is_float(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
        if not rows:
            raise InputError(f"{path}: header but no data rows")
    # A trailing label column is recognized by header name, or (headerless)
    # by being non-numeric in the first data row.
    has_labels = False
    if header is not None:
        has_labels = header[-1].lower() == "label"
    elif len(rows[0]) > 1 and not _is_float(rows[0][-1]):
        has_labels = True

    labels = None
    if has_labels:
        labels = [row[-1].strip() for row in rows]
        rows = [row[:-1] for row in rows]
    n_cols = len(rows[0])
    if n_cols < 1:
        raise InputError(f"{path}: no feature columns")
    X = _parse_numeric(rows, path, 2 if header is not None else 1, n_cols=n_cols)
    return MetricDataset(features=X, metric=metric, labels=labels)
