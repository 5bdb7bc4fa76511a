"""Coupled multi-view data: K row-aligned matrices on the same samples."""
import csv
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AlignmentError, AlreadyCentered, IoError, ParseError, ShapeError


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MultiViewDataset:
    """K matrices ``X_k`` of shape ``(n, p_k)`` sharing their rows.

    Views are indexed ``0..K-1``.  ``column_means`` is present iff the
    dataset was produced by :func:`center_columns`.  Arrays are stored as
    read-only copies.
    """

    views: tuple
    sample_ids: tuple = None
    feature_names: tuple = None
    centered: bool = False
    column_means: Optional[tuple] = None

    def __post_init__(self):
        views = tuple(_frozen(v) for v in self.views)
        if len(views) < 1:
            raise ShapeError("a dataset needs at least one view")
        for k, v in enumerate(views):
            if v.ndim != 2 or v.shape[1] < 1 or v.shape[0] < 1:
                raise ShapeError(f"view {k} has invalid shape {v.shape}")
            if v.shape[0] != views[0].shape[0]:
                raise AlignmentError(
                    f"view {k} has {v.shape[0]} rows, view 0 has {views[0].shape[0]}"
                )
        n = views[0].shape[0]
        object.__setattr__(self, "views", views)

        ids = self.sample_ids
        ids = tuple(f"s{i}" for i in range(n)) if ids is None else tuple(str(s) for s in ids)
        if len(ids) != n:
            raise AlignmentError(f"{len(ids)} sample ids for {n} rows")
        object.__setattr__(self, "sample_ids", ids)

        names = self.feature_names
        if names is None:
            names = tuple(tuple(f"v{k}_f{j}" for j in range(v.shape[1])) for k, v in enumerate(views))
        else:
            names = tuple(tuple(str(s) for s in nk) for nk in names)
            if len(names) != len(views) or any(len(nk) != v.shape[1] for nk, v in zip(names, views)):
                raise ShapeError("feature_names do not match view widths")
        object.__setattr__(self, "feature_names", names)

        if self.centered:
            if self.column_means is None:
                raise ShapeError("a centered dataset must record its column means")
            means = tuple(_frozen(m) for m in self.column_means)
            if len(means) != len(views) or any(m.shape != (v.shape[1],) for m, v in zip(means, views)):
                raise ShapeError("column_means do not match view widths")
            object.__setattr__(self, "column_means", means)
        elif self.column_means is not None:
            raise ShapeError("column_means are recorded only for centered datasets")

    @property
    def n(self):
        return self.views[0].shape[0]

    @property
    def K(self):
        return len(self.views)

    @property
    def p_k(self):
        return tuple(v.shape[1] for v in self.views)

    @property
    def p(self):
        return sum(self.p_k)

    def with_views(self, views):
        """Copy of this dataset with the arrays replaced (same ids and names)."""
        return MultiViewDataset(
            views, self.sample_ids, self.feature_names, self.centered, self.column_means
        )


def center_columns(data):
    """Subtract per-view column means, recording them on the result.

    Raises
    ------
    AlreadyCentered
        If ``data.centered`` is already set.
    """
    if data.centered:
        raise AlreadyCentered("dataset is already centered")
    means = [v.mean(axis=0) for v in data.views]
    views = [v - m for v, m in zip(data.views, means)]
    return MultiViewDataset(views, data.sample_ids, data.feature_names, True, means)


def concatenate(data):
    """Horizontally stack the views in order into an ``(n, p)`` matrix."""
    return np.hstack(data.views)


def split_columns(matrix, p_k):
    """Inverse of :func:`concatenate` for the given view widths."""
    edges = np.cumsum((0,) + tuple(p_k))
    return [matrix[:, a:b] for a, b in zip(edges[:-1], edges[1:])]


def _read_table(path):
    if not path or not os.path.isfile(path):
        raise IoError(f"cannot read {path!r}: no such file")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path!r}: {exc}") from exc
    if not rows or len(rows[0]) < 2:
        raise ParseError(f"{path}: missing header or feature columns", 1, 1, path)
    header = rows[0]
    ids, values = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}", r, len(row), path)
        ids.append(row[0])
        line = []
        for c, cell in enumerate(row[1:], start=2):
            try:
                line.append(float(cell))
            except ValueError:
                raise ParseError(f"{path}: cannot parse {cell!r} at row {r}, column {c}", r, c, path) from None
        values.append(line)
    return ids, header[1:], np.array(values, dtype=np.float64).reshape(len(values), len(header) - 1)


def load_csv(paths: Sequence[str]):
    """Load one view per CSV file.

    Each file has a header row and sample ids in its first column; ids must
    match across files in the same order.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    views, names, ids0 = [], [], None
    for k, path in enumerate(paths):
        ids, cols, X = _read_table(os.fspath(path))
        if ids0 is None:
            ids0 = ids
        elif len(ids) != len(ids0):
            raise AlignmentError(f"view {k} has {len(ids)} rows, view 0 has {len(ids0)}")
        elif ids != ids0:
            bad = next(i for i, (a, b) in enumerate(zip(ids, ids0)) if a != b)
            raise AlignmentError(f"view {k}: sample id {ids[bad]!r} at data row {bad} differs from {ids0[bad]!r}")
        views.append(X)
        names.append(cols)
    return MultiViewDataset(views, ids0, names)


def write_csv(matrix, path, row_ids=None, col_names=None):
    """Write a matrix with a header row and a leading id column.

    Floats use 17 significant digits so :func:`load_csv` round-trips them
    exactly.
    """
    if not path:
        raise IoError("empty output path")
    M = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    n, m = M.shape
    row_ids = [f"r{i}" for i in range(n)] if row_ids is None else list(row_ids)
    col_names = [f"c{j}" for j in range(m)] if col_names is None else list(col_names)
    if len(row_ids) != n or len(col_names) != m:
        raise ShapeError("row_ids / col_names do not match the matrix shape")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + col_names)
            for rid, row in zip(row_ids, M):
                w.writerow([rid] + [format(x, ".17g") for x in row])
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc


def is_column_centered(X, atol=1e-8):
    X = np.asarray(X, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    return bool(np.all(np.abs(X.sum(axis=0)) <= atol * X.shape[0] * scale))
