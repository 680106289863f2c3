"""First- and second-stage regression learners.

All learners share one tiny protocol: :func:`fit_learner` takes a
:class:`LearnerSpec` plus training arrays and returns a
:class:`FittedModel` whose ``predict`` maps a query matrix to
conditional-mean estimates.  Everything is implemented directly on
numpy so that fitted behaviour is a pure function of (spec, data,
seed); no global state is consulted.

Available kinds
---------------
``mean``
    Predicts the training mean everywhere.  Baseline and degenerate
    fallback.
``knn``
    k-nearest-neighbour average, Euclidean metric.  Distance ties are
    broken by training-row index.
``kernel``
    Nadaraya-Watson smoother with a radial gaussian or epanechnikov
    kernel.  ``bandwidth=None`` selects the bandwidth by K-fold
    cross-validation over ``bandwidth_grid`` (ascending; ties go to
    the smallest bandwidth).
``forest``
    Subsampled regression forest with variance-reduction splits.  When
    ``honest`` each tree's subsample is halved: one half chooses the
    splits, the other fills in the leaf means, so no outcome is used
    twice.  Supports out-of-bag prediction on the training rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import rng as rngmod
from .data import make_folds
from .errors import ConfigError, DomainError, SchemaError

__all__ = [
    "LearnerSpec",
    "FittedModel",
    "fit_learner",
    "fit_probability",
]

_KINDS = ("mean", "knn", "kernel", "forest")
_KERNELS = ("gaussian", "epanechnikov")

# Ascending by construction; CV ties resolve to the smallest entry.
# Endpoints 0.01 and 0.5 are pinned; the interior spacing is roughly
# geometric, which is our choice.
DEFAULT_BANDWIDTH_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5)


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative description of a regression learner.

    Only the fields relevant to ``kind`` are consulted; the rest keep
    their defaults so specs stay hashable and comparable.
    """

    kind: str = "kernel"
    # knn
    k: int = 5
    # kernel
    bandwidth: float | None = None
    kernel_shape: str = "gaussian"
    bandwidth_grid: tuple = DEFAULT_BANDWIDTH_GRID
    cv_folds: int = 5
    # forest
    n_trees: int = 500
    min_leaf: int = 5
    subsample_fraction: float = 0.5
    features_per_split: int | None = None
    honest: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(
                f"unknown learner kind {self.kind!r}; expected one of {_KINDS}"
            )
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.kernel_shape not in _KERNELS:
            raise ConfigError(
                f"unknown kernel {self.kernel_shape!r}; expected one of {_KERNELS}"
            )
        grid = tuple(float(h) for h in self.bandwidth_grid)
        if not grid:
            raise ConfigError("bandwidth_grid must be non-empty")
        if any(h <= 0 for h in grid) or any(
            a >= b for a, b in zip(grid, grid[1:])
        ):
            raise ConfigError("bandwidth_grid must be positive and strictly ascending")
        object.__setattr__(self, "bandwidth_grid", grid)
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ConfigError(
                f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}"
            )
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigError(
                f"features_per_split must be >= 1, got {self.features_per_split}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        d = dict(d)
        if "bandwidth_grid" in d:
            d["bandwidth_grid"] = tuple(d["bandwidth_grid"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad learner spec: {e}") from None


def _as_matrix(Xq, d: int) -> np.ndarray:
    """Coerce query points to shape (m, d)."""
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1:
        # A flat vector is m separate points when d == 1, otherwise one point.
        Xq = Xq.reshape(-1, 1) if d == 1 else Xq.reshape(1, -1)
    if Xq.ndim != 2 or Xq.shape[1] != d:
        raise SchemaError(
            f"query points have shape {Xq.shape}, expected (m, {d})"
        )
    return Xq


class FittedModel:
    """A frozen regression fit: ``predict`` maps (m, d) points to (m,).

    Every fitted model records the :class:`LearnerSpec` it came from
    (``spec``) and the training dimension (``n_features``).
    """

    spec: LearnerSpec
    n_features: int

    def predict(self, Xq) -> np.ndarray:
        raise NotImplementedError


class _MeanModel(FittedModel):
    def __init__(self, X, y):
        self.n_features = X.shape[1]
        self._value = float(np.mean(y))

    def predict(self, Xq) -> np.ndarray:
        Xq = _as_matrix(Xq, self.n_features)
        return np.full(Xq.shape[0], self._value)


class _KnnModel(FittedModel):
    """k-nearest-neighbour mean."""

    def __init__(self, X, y, k: int):
        if k > X.shape[0]:
            raise ConfigError(
                f"knn needs k <= n; got k={k} with {X.shape[0]} training rows"
            )
        self._X = X
        self._y = y
        self.n_features = X.shape[1]
        self._k = int(k)

    def predict(self, Xq) -> np.ndarray:
        Xq = _as_matrix(Xq, self.n_features)
        dist = cdist(Xq, self._X)
        # stable sort: equal distances fall back to training-row order
        nearest = np.argsort(dist, axis=1, kind="stable")[:, : self._k]
        return self._y[nearest].mean(axis=1)


def _kernel_weights(dist: np.ndarray, bandwidth: float, shape: str) -> np.ndarray:
    u = dist / bandwidth
    if shape == "gaussian":
        return np.exp(-0.5 * u * u)
    # epanechnikov; the 3/4 constant cancels in the weighted mean
    return np.maximum(0.0, 1.0 - u * u)


def _nw_predict(Xq, Xt, yt, bandwidth, shape):
    w = _kernel_weights(cdist(Xq, Xt), bandwidth, shape)
    tot = w.sum(axis=1)
    out = np.empty(Xq.shape[0])
    dead = tot <= 0.0
    live = ~dead
    if np.any(live):
        out[live] = (w[live] @ yt) / tot[live]
    if np.any(dead):
        # query outside the kernel's reach: fall back to the train mean
        out[dead] = yt.mean()
    return out


class _KernelModel(FittedModel):
    def __init__(self, X, y, bandwidth: float, shape: str):
        self._X = X
        self._y = y
        self.n_features = X.shape[1]
        self.bandwidth = float(bandwidth)
        self._shape = shape

    def predict(self, Xq) -> np.ndarray:
        Xq = _as_matrix(Xq, self.n_features)
        return _nw_predict(Xq, self._X, self._y, self.bandwidth, self._shape)


def _cv_bandwidth(X, y, spec: LearnerSpec, seed: int) -> float:
    """Pick the grid bandwidth with the lowest K-fold held-out SSE.

    Ties (exact SSE equality) resolve to the smallest bandwidth because
    the grid is scanned in ascending order with a strict comparison.
    """
    n = X.shape[0]
    n_folds = min(spec.cv_folds, n)
    if n_folds < 2:
        return spec.bandwidth_grid[0]
    folds = make_folds(n, n_folds, seed=rngmod.derive_seed(seed, "bwcv"))
    best_h, best_sse = None, math.inf
    for h in spec.bandwidth_grid:
        sse = 0.0
        for k in range(n_folds):
            test = folds.rows_in_fold(k)
            train = folds.train_rows(k)
            pred = _nw_predict(X[test], X[train], y[train], h, spec.kernel_shape)
            sse += float(np.sum((pred - y[test]) ** 2))
        if sse < best_sse:
            best_h, best_sse = h, sse
    return best_h


@dataclass
class _Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    in_bag: np.ndarray  # bool mask over training rows
    # provenance: which training rows chose splits vs filled leaves
    structure_rows: np.ndarray
    estimation_rows: np.ndarray


def _best_split_for_feature(vals, ys, min_leaf):
    """Best SSE-reducing cut on one feature, or None.

    Cuts sit at midpoints between consecutive distinct sorted values.
    Returns (sse_reduction, threshold); the first maximal cut (lowest
    threshold) wins on ties via argmax.
    """
    order = np.argsort(vals, kind="stable")
    v = vals[order]
    s = ys[order]
    n = v.shape[0]
    csum = np.cumsum(s)
    total = csum[-1]
    n_left = np.arange(1, n)
    ok = (v[1:] > v[:-1]) & (n_left >= min_leaf) & ((n - n_left) >= min_leaf)
    if not np.any(ok):
        return None
    s_left = csum[:-1]
    score = s_left**2 / n_left + (total - s_left) ** 2 / (n - n_left)
    score[~ok] = -np.inf
    best = int(np.argmax(score))
    threshold = 0.5 * (v[best] + v[best + 1])
    return float(score[best] - total * total / n), float(threshold)


def _grow_tree(Xs, ys, min_leaf, mtry, tree_rng):
    """Greedy depth-first build; returns parallel node arrays.

    ``Xs``/``ys`` are the structure half only.  Leaf values are filled
    in later from the estimation half.
    """
    d = Xs.shape[1]
    feature, threshold, left, right = [], [], [], []
    node_rows = []  # structure rows per node, kept for nothing after build

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        node_rows.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(Xs.shape[0]))]
    while stack:
        node, rows = stack.pop()
        node_rows[node] = rows
        y_node = ys[rows]
        if rows.shape[0] < 2 * min_leaf or np.ptp(y_node) == 0.0:
            continue
        if mtry >= d:
            candidates = range(d)
        else:
            # sorted so the lowest-feature tie-break is scan order
            candidates = np.sort(tree_rng.choice(d, size=mtry, replace=False))
        best = None  # (reduction, feature, threshold)
        for j in candidates:
            found = _best_split_for_feature(Xs[rows, j], y_node, min_leaf)
            if found is None:
                continue
            reduction, thr = found
            if reduction > 0.0 and (best is None or reduction > best[0]):
                best = (reduction, int(j), thr)
        if best is None:
            continue
        _, j, thr = best
        go_left = Xs[rows, j] <= thr
        feature[node] = j
        threshold[node] = thr
        lid, rid = new_node(), new_node()
        left[node], right[node] = lid, rid
        # right first so the left child is processed next (pure convention)
        stack.append((rid, rows[~go_left]))
        stack.append((lid, rows[go_left]))
    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
    )


def _descend(feature, threshold, left, right, Xq):
    """Vectorised routing of query rows to leaf node ids."""
    node = np.zeros(Xq.shape[0], dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        cur = node[active]
        go_left = Xq[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[feature[node[active]] >= 0]
    return node


class _ForestModel(FittedModel):
    """Subsampled honest regression forest."""

    def __init__(self, X, y, spec: LearnerSpec, seed: int):
        n, d = X.shape
        if spec.min_leaf > n:
            raise ConfigError(
                f"forest needs min_leaf <= n; got min_leaf={spec.min_leaf}, n={n}"
            )
        if spec.features_per_split is not None and spec.features_per_split > d:
            raise ConfigError(
                f"features_per_split={spec.features_per_split} exceeds d={d}"
            )
        self._X = X
        self._y = y
        self.n_features = d
        fallback = float(np.mean(y))  # empty estimation leaves predict this
        mtry = d if spec.features_per_split is None else spec.features_per_split
        size = max(1, math.ceil(spec.subsample_fraction * n))
        self._trees = []
        for t in range(spec.n_trees):
            tree_rng = rngmod.stream(seed, "tree", t)
            bag = tree_rng.permutation(n)[:size]
            if spec.honest and size >= 2:
                half = size // 2
                struct_rows, est_rows = bag[:half], bag[half:]
            else:
                struct_rows = est_rows = bag
            feature, threshold, left, right = _grow_tree(
                X[struct_rows], y[struct_rows], spec.min_leaf, mtry, tree_rng
            )
            value = np.full(feature.shape[0], fallback)
            leaf_of = _descend(feature, threshold, left, right, X[est_rows])
            sums = np.bincount(leaf_of, weights=y[est_rows], minlength=value.shape[0])
            counts = np.bincount(leaf_of, minlength=value.shape[0])
            filled = counts > 0
            value[filled] = sums[filled] / counts[filled]
            in_bag = np.zeros(n, dtype=bool)
            in_bag[bag] = True
            self._trees.append(
                _Tree(
                    feature,
                    threshold,
                    left,
                    right,
                    value,
                    in_bag,
                    structure_rows=struct_rows,
                    estimation_rows=est_rows,
                )
            )

    def _tree_matrix(self, Xq) -> np.ndarray:
        """(n_trees, m) per-tree predictions."""
        out = np.empty((len(self._trees), Xq.shape[0]))
        for t, tree in enumerate(self._trees):
            leaf = _descend(tree.feature, tree.threshold, tree.left, tree.right, Xq)
            out[t] = tree.value[leaf]
        return out

    def predict(self, Xq) -> np.ndarray:
        Xq = _as_matrix(Xq, self.n_features)
        return self._tree_matrix(Xq).mean(axis=0)

    def predict_oob(self) -> np.ndarray:
        """Out-of-bag prediction for every training row.

        Each row averages only trees whose subsample excluded it; rows
        that are in-bag everywhere (possible with tiny forests) fall
        back to the full-forest prediction.
        """
        per_tree = self._tree_matrix(self._X)
        out_of_bag = ~np.stack([t.in_bag for t in self._trees])
        n_oob = out_of_bag.sum(axis=0)
        masked = np.where(out_of_bag, per_tree, 0.0).sum(axis=0)
        pred = np.where(n_oob > 0, masked / np.maximum(n_oob, 1), per_tree.mean(axis=0))
        return pred


class _ClippedModel(FittedModel):
    """Wraps a fit so predictions stay inside [lo, hi]."""

    def __init__(self, base: FittedModel, lo: float, hi: float):
        self._base = base
        self.n_features = base.n_features
        self._lo = float(lo)
        self._hi = float(hi)

    def predict(self, Xq) -> np.ndarray:
        return np.clip(self._base.predict(Xq), self._lo, self._hi)

    def predict_oob(self) -> np.ndarray:
        return np.clip(self._base.predict_oob(), self._lo, self._hi)


def _training_arrays(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise SchemaError(
            f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
        )
    if X.shape[0] == 0:
        raise SchemaError("cannot fit a learner on zero rows")
    return X, y


def fit_learner(spec: LearnerSpec, X, y, seed: int = 0) -> FittedModel:
    """Fit ``spec`` on (X, y); deterministic in ``seed``."""
    X, y = _training_arrays(X, y)
    if spec.kind == "mean":
        model = _MeanModel(X, y)
    elif spec.kind == "knn":
        model = _KnnModel(X, y, spec.k)
    elif spec.kind == "kernel":
        h = spec.bandwidth
        if h is None:
            h = _cv_bandwidth(X, y, spec, seed)
        model = _KernelModel(X, y, h, spec.kernel_shape)
    else:
        model = _ForestModel(X, y, spec, seed)
    model.spec = spec
    return model


def fit_probability(
    spec: LearnerSpec, X, y, seed: int = 0, clip: float = 0.01
) -> FittedModel:
    """Fit a {0,1}-outcome regression, clipping predictions to [clip, 1-clip].

    Used for propensities and binary-outcome means, where downstream
    inverse weighting cannot tolerate estimates at or beyond the
    boundary.
    """
    if not 0.0 < clip < 0.5:
        raise ConfigError(f"clip must be in (0, 0.5), got {clip}")
    y_arr = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isin(y_arr, (0.0, 1.0))):
        raise DomainError("fit_probability needs a 0/1 outcome vector")
    model = _ClippedModel(fit_learner(spec, X, y, seed=seed), clip, 1.0 - clip)
    model.spec = spec
    return model
