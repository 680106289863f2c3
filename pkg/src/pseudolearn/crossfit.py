"""K-fold cross-fitting of nuisance models.

Produces strictly out-of-fold predictions: every row's nuisance values
come from models that never saw that row.  Arm-conditional outcome
models are fitted on one arm's rows only; the propensity model is
fitted on all training rows with the indicator as target.

The fold loop is deterministic given (data, config): fold draws and
per-fold learner seeds all derive from ``config.seed``, so the K fits
could run in any order or in parallel without changing the result.

Row-order sensitivity: with order-insensitive learners (knn, fixed
bandwidth kernel) the output is equivariant under row permutation once
the fold assignment is transported alongside.  Learners that consume
seeded randomness tied to row positions (forest subsampling, CV
bandwidth selection) do not have this property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .data import (
    EPS_CLIP_DEFAULT,
    P_CLIP_DEFAULT,
    Dataset,
    FoldAssignment,
    NuisanceEstimates,
    make_folds,
)
from .errors import ConfigError, DomainError, EstimationError, SchemaError
from .learners import LearnerSpec, fit_learner, fit_probability

__all__ = [
    "CrossfitConfig",
    "crossfit_nuisances",
    "fixed_propensity",
    "oob_nuisances",
    "evaluate_propensity",
]

# A violated fold draw (some training complement missing an arm) is
# redrawn with a fresh seed at most this many times before giving up.
MAX_FOLD_REDRAWS = 100


@dataclass(frozen=True)
class CrossfitConfig:
    """Settings for one cross-fitting pass."""

    outcome_spec: LearnerSpec = field(default_factory=LearnerSpec)
    propensity_spec: LearnerSpec = field(default_factory=LearnerSpec)
    n_folds: int = 5
    seed: int = 0
    eps_clip: float = EPS_CLIP_DEFAULT
    p_clip: float = P_CLIP_DEFAULT
    binary_outcome: bool = False

    def __post_init__(self):
        if self.n_folds < 2:
            raise ConfigError(f"n_folds must be >= 2, got {self.n_folds}")
        for name, v in (("eps_clip", self.eps_clip), ("p_clip", self.p_clip)):
            if not 0.0 < v < 0.5:
                raise ConfigError(f"{name} must be in (0, 0.5), got {v}")

    @classmethod
    def from_dict(cls, d: dict) -> "CrossfitConfig":
        d = dict(d)
        for key in ("outcome_spec", "propensity_spec"):
            if isinstance(d.get(key), dict):
                d[key] = LearnerSpec.from_dict(d[key])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad crossfit config: {e}") from None


def evaluate_propensity(data: Dataset, pi_fn, eps_clip: float) -> np.ndarray:
    """Row-wise evaluation of a known propensity, validated then clipped.

    ``pi_fn`` may be a scalar, an array of length n, or a callable
    applied to each covariate row.  Values must lie strictly inside
    (0, 1) before clipping; anything else is an overlap violation.
    """
    if callable(pi_fn):
        vals = np.asarray([float(pi_fn(x)) for x in data.X])
    elif np.isscalar(pi_fn):
        vals = np.full(data.n, float(pi_fn))
    else:
        vals = np.asarray(pi_fn, dtype=float).ravel()
        if vals.shape[0] != data.n:
            raise SchemaError(
                f"propensity array has length {vals.shape[0]}, expected {data.n}"
            )
    if not np.all(np.isfinite(vals)):
        raise DomainError("known propensity produced a non-finite value")
    if np.any(vals <= 0.0) or np.any(vals >= 1.0):
        bad = float(vals[np.argmax((vals <= 0.0) | (vals >= 1.0))])
        raise DomainError(
            f"known propensity produced {bad}, outside the open interval (0, 1)"
        )
    return np.clip(vals, eps_clip, 1.0 - eps_clip)


def _arms_ok(fold_of: np.ndarray, w: np.ndarray, n_folds: int) -> bool:
    # every training complement must contain both arms
    for k in range(n_folds):
        train_w = w[fold_of != k]
        if train_w.size == 0 or train_w.min() == 1 or train_w.max() == 0:
            return False
    return True


def _draw_folds(data: Dataset, cfg: CrossfitConfig) -> FoldAssignment:
    for attempt in range(MAX_FOLD_REDRAWS + 1):
        fa = make_folds(
            data.n, cfg.n_folds, seed=rngmod.derive_seed(cfg.seed, "folds", attempt)
        )
        if _arms_ok(fa.fold_of, data.w, cfg.n_folds):
            return fa
    raise EstimationError(
        f"degenerate arm: some treatment arm is missing from a training "
        f"complement in every of {MAX_FOLD_REDRAWS + 1} fold draws"
    )


def crossfit_nuisances(
    data: Dataset,
    cfg: CrossfitConfig,
    folds: FoldAssignment | None = None,
    known_propensity=None,
    instrument=None,
) -> NuisanceEstimates:
    """First stage: out-of-fold nuisance predictions for every row.

    Parameters
    ----------
    data : Dataset
        Must carry a 0/1 indicator column.
    cfg : CrossfitConfig
    folds : FoldAssignment, optional
        Injected fold assignment (no redrawing happens for injected
        folds; a degenerate arm errors immediately).
    known_propensity : scalar, array or callable, optional
        Bypasses propensity fitting; see :func:`evaluate_propensity`.
    instrument : callable, optional
        Called as ``instrument(name, fold, train_rows, predict_rows)``
        for every model fit, exposing training-row identifiers so fold
        hygiene can be audited externally.

    Returns
    -------
    NuisanceEstimates
        With ``fold_of`` and per-fold ``train_rows`` provenance filled
        in.
    """
    if data.w is None:
        raise SchemaError("cross-fitting needs a treatment/observation indicator")
    w = data.w
    n = data.n
    if w.sum() in (0, n):
        raise EstimationError(
            "degenerate arm: all rows share one indicator value"
        )
    if folds is None:
        folds = _draw_folds(data, cfg)
    else:
        if folds.n != n:
            raise SchemaError(
                f"fold assignment covers {folds.n} rows, dataset has {n}"
            )
        if folds.n_folds != cfg.n_folds:
            raise ConfigError(
                f"fold assignment has {folds.n_folds} folds, config says {cfg.n_folds}"
            )
        if not _arms_ok(folds.fold_of, w, cfg.n_folds):
            raise EstimationError(
                "degenerate arm: injected folds leave a training complement "
                "without one arm"
            )

    if cfg.binary_outcome and not np.all(np.isin(data.y, (0.0, 1.0))):
        raise DomainError("binary_outcome=True but y contains non-0/1 values")

    pi_known = None
    if known_propensity is not None:
        pi_known = evaluate_propensity(data, known_propensity, cfg.eps_clip)

    def fit_outcome(X, y, seed):
        if cfg.binary_outcome:
            return fit_probability(cfg.outcome_spec, X, y, seed=seed, clip=cfg.p_clip)
        return fit_learner(cfg.outcome_spec, X, y, seed=seed)

    mu0_hat = np.empty(n)
    mu1_hat = np.empty(n)
    pi_hat = np.empty(n)
    train_rows = []
    for k in range(cfg.n_folds):
        test = folds.rows_in_fold(k)
        train = folds.train_rows(k)
        train_rows.append(train)
        rows0 = train[w[train] == 0]
        rows1 = train[w[train] == 1]

        m0 = fit_outcome(
            data.X[rows0], data.y[rows0], rngmod.derive_seed(cfg.seed, "mu0", k)
        )
        mu0_hat[test] = m0.predict(data.X[test])
        if instrument is not None:
            instrument("mu0", k, rows0, test)

        m1 = fit_outcome(
            data.X[rows1], data.y[rows1], rngmod.derive_seed(cfg.seed, "mu1", k)
        )
        mu1_hat[test] = m1.predict(data.X[test])
        if instrument is not None:
            instrument("mu1", k, rows1, test)

        if pi_known is None:
            mpi = fit_probability(
                cfg.propensity_spec,
                data.X[train],
                w[train].astype(float),
                seed=rngmod.derive_seed(cfg.seed, "pi", k),
                clip=cfg.eps_clip,
            )
            pi_hat[test] = mpi.predict(data.X[test])
            if instrument is not None:
                instrument("pi", k, train, test)
        else:
            pi_hat[test] = pi_known[test]

    return NuisanceEstimates(
        mu0_hat=mu0_hat,
        mu1_hat=mu1_hat,
        pi_hat=pi_hat,
        fold_of=folds.fold_of,
        train_rows=tuple(train_rows),
    )


def fixed_propensity(
    data: Dataset,
    pi_fn,
    cfg: CrossfitConfig,
    folds: FoldAssignment | None = None,
    instrument=None,
) -> NuisanceEstimates:
    """Nuisances for a design with known assignment probabilities.

    ``pi_hat`` is the clipped evaluation of ``pi_fn`` on each row; the
    outcome models are still cross-fitted exactly as in
    :func:`crossfit_nuisances`.
    """
    return crossfit_nuisances(
        data, cfg, folds=folds, known_propensity=pi_fn, instrument=instrument
    )


def oob_nuisances(
    data: Dataset, cfg: CrossfitConfig, known_propensity=None
) -> NuisanceEstimates:
    """Out-of-bag alternative to fold splitting, for forest nuisances.

    Each arm's outcome forest predicts its own training rows out-of-bag
    and the opposite arm's rows with the full forest; the propensity
    forest predicts every row out-of-bag.  No fold provenance applies.
    """
    if data.w is None:
        raise SchemaError("out-of-bag nuisances need an indicator column")
    if cfg.outcome_spec.kind != "forest":
        raise ConfigError("oob_nuisances requires a forest outcome_spec")
    if known_propensity is None and cfg.propensity_spec.kind != "forest":
        raise ConfigError("oob_nuisances requires a forest propensity_spec")
    w = data.w
    n = data.n
    if w.sum() in (0, n):
        raise EstimationError("degenerate arm: all rows share one indicator value")

    def fit_outcome(X, y, seed):
        if cfg.binary_outcome:
            return fit_probability(cfg.outcome_spec, X, y, seed=seed, clip=cfg.p_clip)
        return fit_learner(cfg.outcome_spec, X, y, seed=seed)

    rows0 = np.flatnonzero(w == 0)
    rows1 = np.flatnonzero(w == 1)
    mu0_hat = np.empty(n)
    mu1_hat = np.empty(n)

    m0 = fit_outcome(data.X[rows0], data.y[rows0], rngmod.derive_seed(cfg.seed, "mu0"))
    mu0_hat[rows0] = m0.predict_oob()
    mu0_hat[rows1] = m0.predict(data.X[rows1])

    m1 = fit_outcome(data.X[rows1], data.y[rows1], rngmod.derive_seed(cfg.seed, "mu1"))
    mu1_hat[rows1] = m1.predict_oob()
    mu1_hat[rows0] = m1.predict(data.X[rows0])

    if known_propensity is not None:
        pi_hat = evaluate_propensity(data, known_propensity, cfg.eps_clip)
    else:
        mpi = fit_probability(
            cfg.propensity_spec,
            data.X,
            w.astype(float),
            seed=rngmod.derive_seed(cfg.seed, "pi"),
            clip=cfg.eps_clip,
        )
        pi_hat = mpi.predict_oob()

    return NuisanceEstimates(mu0_hat=mu0_hat, mu1_hat=mu1_hat, pi_hat=pi_hat)
