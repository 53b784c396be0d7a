"""Semi-supervised data container, CSV ingestion, splitting and scaling.

Sample ordering convention used throughout the package: the ``n`` labeled
rows come first, followed by the ``m`` unlabeled rows, so that a vector of
length ``N = n + m`` evaluated "on all sample points" is laid out as
``[labeled..., unlabeled...]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    """Labeled block ``(X, W, Y)`` plus unlabeled block ``(X, W)``.

    ``y_unlabeled`` optionally stores labels of the unlabeled rows that a
    generator produced. Training and model-selection code never reads it.
    ``groups`` optionally carries one group key per labeled row for grouped
    cross-validation.
    """

    x_labeled: np.ndarray
    w_labeled: np.ndarray
    y_labeled: np.ndarray
    x_unlabeled: np.ndarray
    w_unlabeled: np.ndarray
    x_names: tuple[str, ...] = ()
    w_names: tuple[str, ...] = ()
    y_name: str = "y"
    kind: str = "regression"
    y_unlabeled: np.ndarray | None = None
    groups: np.ndarray | None = None

    def __post_init__(self):
        xl = np.asarray(self.x_labeled, dtype=float)
        yl = np.asarray(self.y_labeled, dtype=float).ravel()
        n = yl.shape[0]
        if n < 1:
            raise DataError("dataset needs at least one labeled row")
        if xl.ndim == 1:
            xl = xl.reshape(n, -1)
        wl = np.asarray(self.w_labeled, dtype=float)
        wl = wl.reshape(n, 0) if wl.size == 0 else wl.reshape(n, -1)
        xu = np.asarray(self.x_unlabeled, dtype=float)
        if xu.size == 0:
            xu = xu.reshape(0, xl.shape[1])
        xu = xu.reshape(-1, xl.shape[1]) if xu.ndim != 2 else xu
        m = xu.shape[0]
        wu = np.asarray(self.w_unlabeled, dtype=float).reshape(m, wl.shape[1])
        object.__setattr__(self, "x_labeled", xl)
        object.__setattr__(self, "w_labeled", wl)
        object.__setattr__(self, "y_labeled", yl)
        object.__setattr__(self, "x_unlabeled", xu)
        object.__setattr__(self, "w_unlabeled", wu)
        if self.y_unlabeled is not None:
            object.__setattr__(self, "y_unlabeled", np.asarray(self.y_unlabeled, dtype=float).ravel())
        if self.groups is not None:
            object.__setattr__(self, "groups", np.asarray(self.groups))

        if xl.shape[0] != n or xl.shape[1] < 1:
            raise DataError(f"x_labeled has shape {xl.shape}, expected ({n}, dX>=1)")
        if xu.shape[1] != xl.shape[1] or wu.shape[1] != wl.shape[1]:
            raise DataError("labeled and unlabeled blocks disagree on feature widths")
        for name in ("x_labeled", "w_labeled", "y_labeled", "x_unlabeled", "w_unlabeled"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"{name} contains non-finite entries")
        if self.y_unlabeled is not None and self.y_unlabeled.shape[0] != m:
            raise DataError("y_unlabeled length differs from the unlabeled row count")
        if self.groups is not None and self.groups.shape[0] != n:
            raise DataError("groups must have one entry per labeled row")
        if self.kind not in ("regression", "binary"):
            raise DataError(f"unknown label kind {self.kind!r}")
        if self.kind == "binary" and not np.all(np.isin(yl, (0.0, 1.0))):
            raise DataError("binary labels must be 0 or 1")
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{j}" for j in range(xl.shape[1])))
        if not self.w_names and wl.shape[1]:
            object.__setattr__(self, "w_names", tuple(f"w{j}" for j in range(wl.shape[1])))

    @property
    def n(self) -> int:
        return self.y_labeled.shape[0]

    @property
    def m(self) -> int:
        return self.x_unlabeled.shape[0]

    @property
    def N(self) -> int:
        return self.n + self.m

    @property
    def dx(self) -> int:
        return self.x_labeled.shape[1]

    @property
    def dw(self) -> int:
        return self.w_labeled.shape[1]

    @property
    def z_labeled(self) -> np.ndarray:
        return np.hstack([self.x_labeled, self.w_labeled])

    @property
    def z_unlabeled(self) -> np.ndarray:
        return np.hstack([self.x_unlabeled, self.w_unlabeled])

    @property
    def x_all(self) -> np.ndarray:
        return np.vstack([self.x_labeled, self.x_unlabeled])

    @property
    def z_all(self) -> np.ndarray:
        return np.vstack([self.z_labeled, self.z_unlabeled])

    def subset_labeled(self, idx) -> "Dataset":
        """Keep only the labeled rows ``idx``; the unlabeled block is shared."""
        idx = np.asarray(idx, dtype=int)
        return replace(
            self,
            x_labeled=self.x_labeled[idx],
            w_labeled=self.w_labeled[idx],
            y_labeled=self.y_labeled[idx],
            groups=None if self.groups is None else self.groups[idx],
        )


@dataclass(frozen=True)
class ColumnSpec:
    deployment_cols: Sequence[str]
    privileged_cols: Sequence[str]
    label_col: str
    kind: str = "regression"
    group_col: str | None = None

    def __post_init__(self):
        dep, priv = list(self.deployment_cols), list(self.privileged_cols)
        if not dep:
            raise DataError("at least one deployment column is required")
        overlap = set(dep) & set(priv)
        if overlap:
            raise DataError(f"columns listed as both deployment and privileged: {sorted(overlap)}")
        if self.label_col in dep or self.label_col in priv:
            raise DataError(f"label column {self.label_col!r} is also a feature column")
        if self.kind not in ("regression", "binary"):
            raise DataError(f"unknown label kind {self.kind!r}")


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return value


def load_csv(path, spec: ColumnSpec) -> Dataset:
    """Read a CSV file into a :class:`Dataset`.

    Rows whose label cell is empty become unlabeled rows. Within each block
    rows keep their file order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = list(spec.deployment_cols) + list(spec.privileged_cols) + [spec.label_col]
        if spec.group_col is not None:
            wanted.append(spec.group_col)
        for col in wanted:
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        pos = {h: i for i, h in enumerate(header)}

        lab_x, lab_w, lab_y, lab_g = [], [], [], []
        unl_x, unl_w = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {rowno}: expected {len(header)} cells, found {len(row)}")
            x = [_parse_float(row[pos[c]], rowno, c) for c in spec.deployment_cols]
            w = [_parse_float(row[pos[c]], rowno, c) for c in spec.privileged_cols]
            label_cell = row[pos[spec.label_col]].strip()
            if label_cell == "":
                unl_x.append(x)
                unl_w.append(w)
            else:
                lab_x.append(x)
                lab_w.append(w)
                lab_y.append(_parse_float(label_cell, rowno, spec.label_col))
                if spec.group_col is not None:
                    lab_g.append(row[pos[spec.group_col]])

    if not lab_y:
        raise DataError(f"{path}: no labeled rows")
    dx, dw = len(spec.deployment_cols), len(spec.privileged_cols)
    return Dataset(
        x_labeled=np.array(lab_x, dtype=float).reshape(len(lab_y), dx),
        w_labeled=np.array(lab_w, dtype=float).reshape(len(lab_y), dw),
        y_labeled=np.array(lab_y, dtype=float),
        x_unlabeled=np.array(unl_x, dtype=float).reshape(len(unl_x), dx),
        w_unlabeled=np.array(unl_w, dtype=float).reshape(len(unl_x), dw),
        x_names=tuple(spec.deployment_cols),
        w_names=tuple(spec.privileged_cols),
        y_name=spec.label_col,
        kind=spec.kind,
        groups=np.array(lab_g) if spec.group_col is not None else None,
    )


def write_csv(ds: Dataset, path, group_col: str = "group") -> None:
    """Write ``ds`` in the format read by :func:`load_csv`.

    Labeled rows are written first. Floats use ``repr`` so that parsing the
    file back yields bit-identical values. Group keys, when present, go to a
    trailing ``group_col`` column that is empty on unlabeled rows.
    """
    path = Path(path)
    header = list(ds.x_names) + list(ds.w_names) + [ds.y_name]
    grouped = ds.groups is not None
    if grouped:
        header.append(group_col)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, (x, w, y) in enumerate(zip(ds.x_labeled, ds.w_labeled, ds.y_labeled)):
            row = [repr(float(v)) for v in x] + [repr(float(v)) for v in w] + [repr(float(y))]
            writer.writerow(row + [str(ds.groups[i])] if grouped else row)
        for x, w in zip(ds.x_unlabeled, ds.w_unlabeled):
            row = [repr(float(v)) for v in x] + [repr(float(v)) for v in w] + [""]
            writer.writerow(row + [""] if grouped else row)


def _largest_remainder(counts: np.ndarray, total: int) -> np.ndarray:
    quotas = counts * total / counts.sum()
    alloc = np.floor(quotas).astype(int)
    short = total - alloc.sum()
    # stable sort keeps lower class first among equal remainders
    order = np.argsort(-(quotas - alloc), kind="stable")
    alloc[order[:short]] += 1
    return alloc


def make_semisupervised_split(full: Dataset, n_labeled: int, seed: int, stratify: bool = False) -> Dataset:
    """Hide all but ``n_labeled`` labels of a fully labeled dataset.

    With ``stratify`` each class receives its largest-remainder share of the
    labeled budget. Labeled and unlabeled rows keep their original relative
    order; labels of the unlabeled rows are dropped.
    """
    total = full.n
    if not 1 <= n_labeled <= total:
        raise DataError(f"n_labeled={n_labeled} must lie in [1, {total}]")
    rng = np.random.default_rng(seed)
    if stratify:
        if full.kind != "binary":
            raise DataError("stratified splitting requires class labels")
        classes, inverse = np.unique(full.y_labeled, return_inverse=True)
        counts = np.bincount(inverse)
        alloc = _largest_remainder(counts.astype(float), n_labeled)
        chosen = [rng.choice(np.flatnonzero(inverse == c), size=k, replace=False) for c, k in enumerate(alloc)]
        lab = np.sort(np.concatenate(chosen))
    else:
        lab = np.sort(rng.choice(total, size=n_labeled, replace=False))
    mask = np.zeros(total, dtype=bool)
    mask[lab] = True
    unl = np.flatnonzero(~mask)
    return Dataset(
        x_labeled=full.x_labeled[lab],
        w_labeled=full.w_labeled[lab],
        y_labeled=full.y_labeled[lab],
        x_unlabeled=full.x_labeled[unl],
        w_unlabeled=full.w_labeled[unl],
        x_names=full.x_names,
        w_names=full.w_names,
        y_name=full.y_name,
        kind=full.kind,
        groups=None if full.groups is None else full.groups[lab],
    )


@dataclass(frozen=True)
class _ColumnStats:
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, a: np.ndarray) -> "_ColumnStats":
        mean = a.mean(axis=0) if a.shape[0] else np.zeros(a.shape[1])
        sd = a.std(axis=0) if a.shape[0] else np.zeros(a.shape[1])  # population sd
        constant = ~(sd > 0)
        return cls(np.where(constant, 0.0, mean), np.where(constant, 1.0, sd), constant)

    def forward(self, a):
        return (np.asarray(a, dtype=float) - self.mean) / self.scale

    def inverse(self, a):
        return np.asarray(a, dtype=float) * self.scale + self.mean


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine scaling fitted on one dataset.

    Constant columns get mean 0 and scale 1, i.e. they pass through
    unchanged, and are listed in ``constant_x`` / ``constant_w``.
    """

    x: _ColumnStats
    w: _ColumnStats
    y_mean: float = 0.0
    y_scale: float = 1.0
    scales_y: bool = False
    fitted: bool = True

    @property
    def constant_x(self) -> np.ndarray:
        return np.flatnonzero(self.x.constant)

    @property
    def constant_w(self) -> np.ndarray:
        return np.flatnonzero(self.w.constant)

    def transform_x(self, x):
        return self.x.forward(x)

    def transform_w(self, w):
        return self.w.forward(w)

    def transform_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def inverse_y(self, y):
        return np.asarray(y, dtype=float) * self.y_scale + self.y_mean

    def transform(self, ds: Dataset) -> Dataset:
        return replace(
            ds,
            x_labeled=self.x.forward(ds.x_labeled),
            w_labeled=self.w.forward(ds.w_labeled),
            x_unlabeled=self.x.forward(ds.x_unlabeled),
            w_unlabeled=self.w.forward(ds.w_unlabeled),
            y_labeled=self.transform_y(ds.y_labeled) if self.scales_y else ds.y_labeled,
            y_unlabeled=(self.transform_y(ds.y_unlabeled) if self.scales_y and ds.y_unlabeled is not None
                         else ds.y_unlabeled),
        )

    def inverse(self, ds: Dataset) -> Dataset:
        return replace(
            ds,
            x_labeled=self.x.inverse(ds.x_labeled),
            w_labeled=self.w.inverse(ds.w_labeled),
            x_unlabeled=self.x.inverse(ds.x_unlabeled),
            w_unlabeled=self.w.inverse(ds.w_unlabeled),
            y_labeled=self.inverse_y(ds.y_labeled) if self.scales_y else ds.y_labeled,
            y_unlabeled=(self.inverse_y(ds.y_unlabeled) if self.scales_y and ds.y_unlabeled is not None
                         else ds.y_unlabeled),
        )


def standardize(ds: Dataset, policy: str = "features_only") -> tuple[Dataset, Standardizer]:
    """Center and scale features (and optionally the label).

    Feature statistics use labeled and unlabeled rows together; label
    statistics use labeled rows only. The population standard deviation
    (divide by the row count) is used.
    """
    if policy not in ("features_only", "features_and_label"):
        raise ValueError(f"unknown standardization policy {policy!r}")
    xs = _ColumnStats.fit(ds.x_all)
    ws = _ColumnStats.fit(np.vstack([ds.w_labeled, ds.w_unlabeled]))
    y_mean, y_scale, scales_y = 0.0, 1.0, False
    if policy == "features_and_label":
        if ds.kind == "binary":
            raise DataError("refusing to standardize binary labels")
        scales_y = True
        sd = float(ds.y_labeled.std())
        if sd > 0:
            y_mean, y_scale = float(ds.y_labeled.mean()), sd
    st = Standardizer(xs, ws, y_mean, y_scale, scales_y)
    return st.transform(ds), st
