"""Core data model: observations, datasets, fold assignments, nuisance tables.

A :class:`Dataset` is an immutable column store of covariates ``X``,
outcomes ``y`` and an optional binary treatment/observation indicator
``w``.  All estimators in the package consume datasets and produce or
consume :class:`NuisanceEstimates` aligned row-by-row with them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ParseError, SchemaError

__all__ = [
    "EPS_CLIP_DEFAULT",
    "P_CLIP_DEFAULT",
    "Observation",
    "Dataset",
    "FoldAssignment",
    "NuisanceEstimates",
    "ColumnMap",
    "make_folds",
    "load_csv",
]

# Numeric floors enforcing overlap: propensities are clipped into
# [EPS_CLIP, 1 - EPS_CLIP], binary-outcome means into [P_CLIP, 1 - P_CLIP].
EPS_CLIP_DEFAULT = 0.01
P_CLIP_DEFAULT = 0.01


@dataclass(frozen=True)
class Observation:
    """A single row: covariates, outcome, optional 0/1 indicator."""

    x: np.ndarray
    y: float
    w: int | None = None


class Dataset:
    """Immutable sample of n observations with d covariates each.

    Parameters
    ----------
    X : array-like, shape (n, d)
        Covariate matrix; all entries finite.
    y : array-like, shape (n,)
        Outcomes; all entries finite.
    w : array-like of {0, 1}, shape (n,), optional
        Treatment / observation indicator.  Absent for pure regression
        problems.
    """

    def __init__(self, X, y, w=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise SchemaError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if X.shape[0] == 0:
            raise SchemaError("dataset is empty")
        if not np.all(np.isfinite(X)):
            bad = int(np.argwhere(~np.isfinite(X))[0][0])
            raise DomainError(f"non-finite covariate in row {bad}")
        if not np.all(np.isfinite(y)):
            bad = int(np.argwhere(~np.isfinite(y))[0][0])
            raise DomainError(f"non-finite outcome in row {bad}")
        if w is not None:
            w = np.asarray(w)
            if w.shape[0] != y.shape[0]:
                raise SchemaError(
                    f"w has {w.shape[0]} entries, expected {y.shape[0]}"
                )
            wf = w.astype(float)
            ok = np.isin(wf, (0.0, 1.0)) & np.isfinite(wf)
            if not np.all(ok):
                bad = int(np.argwhere(~ok)[0][0])
                raise DomainError(
                    f"treatment indicator must be 0 or 1; row {bad} has {w[bad]!r}"
                )
            w = wf.astype(np.int64)
            w.flags.writeable = False
        X = X.copy()
        y = y.copy()
        X.flags.writeable = False
        y.flags.writeable = False
        self.X = X
        self.y = y
        self.w = w

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def has_treatment(self) -> bool:
        return self.w is not None

    def row(self, i: int) -> Observation:
        w = None if self.w is None else int(self.w[i])
        return Observation(x=self.X[i], y=float(self.y[i]), w=w)

    def subset(self, idx) -> "Dataset":
        """New dataset from the given row indices (order preserved)."""
        idx = np.asarray(idx)
        w = None if self.w is None else self.w[idx]
        return Dataset(self.X[idx], self.y[idx], w)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        arm = "" if self.w is None else f", treated={int(self.w.sum())}"
        return f"Dataset(n={self.n}, d={self.d}{arm})"


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of row indices {0..n-1} into ``n_folds`` balanced folds."""

    fold_of: np.ndarray
    n_folds: int

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        fold_of.flags.writeable = False
        object.__setattr__(self, "fold_of", fold_of)
        counts = np.bincount(fold_of, minlength=self.n_folds)
        if counts.size != self.n_folds or np.any(counts == 0):
            raise ConfigError("every fold must be non-empty")
        if counts.max() - counts.min() > 1:
            raise ConfigError("fold sizes must differ by at most 1")

    @property
    def n(self) -> int:
        return self.fold_of.shape[0]

    def rows_in_fold(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def train_rows(self, k: int) -> np.ndarray:
        """Complement of fold k, i.e. the rows a fold-k model trains on."""
        return np.flatnonzero(self.fold_of != k)


def make_folds(n: int, n_folds: int, seed: int) -> FoldAssignment:
    """Uniformly random balanced partition of n rows into ``n_folds`` folds.

    Deterministic in ``seed``.  Fold sizes differ by at most one
    (permute-then-chunk, so balance is exact).
    """
    if n_folds < 2 or n_folds > n:
        raise ConfigError(
            f"fold count must satisfy 2 <= K <= n; got K={n_folds}, n={n}"
        )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    # chunk lengths n//K (+1 for the first n % K folds)
    base, extra = divmod(n, n_folds)
    start = 0
    for k in range(n_folds):
        size = base + (1 if k < extra else 0)
        fold_of[perm[start : start + size]] = k
        start += size
    return FoldAssignment(fold_of=fold_of, n_folds=n_folds)


@dataclass(frozen=True)
class NuisanceEstimates:
    """Per-row out-of-fold nuisance predictions.

    ``mu0_hat`` and ``mu1_hat`` are the arm-conditional outcome means,
    ``pi_hat`` the propensity, all aligned with the dataset rows they
    were computed for.  ``fold_of`` / ``train_rows`` record, when the
    estimates come from cross-fitting, which fold each row fell in and
    which rows each fold's models were trained on; they exist so that
    fold hygiene can be audited.
    """

    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    pi_hat: np.ndarray
    fold_of: np.ndarray | None = None
    train_rows: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        mu0 = np.asarray(self.mu0_hat, dtype=float)
        mu1 = np.asarray(self.mu1_hat, dtype=float)
        pi = np.asarray(self.pi_hat, dtype=float)
        if not (mu0.shape == mu1.shape == pi.shape):
            raise SchemaError("nuisance vectors must have identical length")
        for name, arr in (("mu0_hat", mu0), ("mu1_hat", mu1), ("pi_hat", pi)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"non-finite value in {name}")
        if np.any(pi <= 0.0) or np.any(pi >= 1.0):
            raise DomainError("pi_hat must lie strictly inside (0, 1)")
        object.__setattr__(self, "mu0_hat", mu0)
        object.__setattr__(self, "mu1_hat", mu1)
        object.__setattr__(self, "pi_hat", pi)

    @property
    def n(self) -> int:
        return self.pi_hat.shape[0]


@dataclass(frozen=True)
class ColumnMap:
    """Names the CSV columns holding covariates, outcome and treatment."""

    covariates: tuple
    outcome: str
    treatment: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMap":
        try:
            cov = tuple(d["covariates"])
            out = d["outcome"]
        except KeyError as e:
            raise ConfigError(f"column map is missing {e.args[0]!r}") from None
        if not cov:
            raise ConfigError("column map needs at least one covariate column")
        return cls(covariates=cov, outcome=out, treatment=d.get("treatment"))


def load_csv(path, column_map) -> Dataset:
    """Parse a headered CSV file into a :class:`Dataset`.

    Rows with any non-finite field are rejected (not silently dropped:
    silent row loss changes n and breaks reproducibility).  Floats use
    decimal points; no locale-dependent parsing.

    Raises
    ------
    SchemaError
        Missing column or header-only file.
    ParseError
        Non-numeric cell, with row and column named.
    DomainError
        Non-finite value or treatment outside {0, 1}, row named.
    """
    if isinstance(column_map, dict):
        column_map = ColumnMap.from_dict(column_map)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty (no header row)") from None
        header = [h.strip() for h in header]
        col_idx = {}
        needed = list(column_map.covariates) + [column_map.outcome]
        if column_map.treatment is not None:
            needed.append(column_map.treatment)
        for name in needed:
            if name not in header:
                raise SchemaError(f"{path}: missing column {name!r}")
            col_idx[name] = header.index(name)

        X_rows, y_rows, w_rows = [], [], []
        for rownum, rec in enumerate(reader):
            def cell(name):
                j = col_idx[name]
                if j >= len(rec):
                    raise ParseError(
                        f"{path}: row {rownum}: too few fields for column {name!r}"
                    )
                raw = rec[j].strip()
                try:
                    val = float(raw)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"cannot parse {raw!r} as a number"
                    ) from None
                if not math.isfinite(val):
                    raise DomainError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"non-finite value {raw!r}"
                    )
                return val

            X_rows.append([cell(c) for c in column_map.covariates])
            y_rows.append(cell(column_map.outcome))
            if column_map.treatment is not None:
                wv = cell(column_map.treatment)
                if wv not in (0.0, 1.0):
                    raise DomainError(
                        f"{path}: row {rownum}: treatment value {wv!r} "
                        "is not 0 or 1"
                    )
                w_rows.append(int(wv))

    if not X_rows:
        raise SchemaError(f"{path}: no data rows (header only)")
    w = np.asarray(w_rows) if column_map.treatment is not None else None
    return Dataset(np.asarray(X_rows), np.asarray(y_rows), w)
