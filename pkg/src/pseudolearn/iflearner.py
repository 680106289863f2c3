"""Two-stage target-function estimation.

First stage: cross-fitted nuisance estimates feed a pseudo-outcome
constructor, giving one unbiased-ish signal D per row.  Second stage:
a plain regression of D on the covariates.  The result is a queryable
model of the target function (treatment effect, risk ratio, MAR mean,
...) that corrects the plug-in bias of naively contrasting fitted
regressions.

Also here: the infeasible oracle variant (true nuisance functions
plugged in, no cross-fitting) used to benchmark how much the feasible
pipeline loses, and the plug-in baseline that skips bias correction
entirely.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .crossfit import CrossfitConfig, crossfit_nuisances, evaluate_propensity
from .data import Dataset, FoldAssignment, NuisanceEstimates
from .errors import ConfigError, DomainError, EstimationError, SchemaError
from .learners import FittedModel, LearnerSpec, fit_learner, fit_probability
from .pseudo import (
    PseudoOutcomeSpec,
    build_pseudo_outcomes,
    odds_ratio_value,
    risk_ratio_value,
)

__all__ = [
    "IFLearnerConfig",
    "TargetModel",
    "TrueNuisances",
    "fit_if_learner",
    "fit_oracle_learner",
    "fit_plugin_learner",
    "predict_target",
    "winsorize_values",
    "config_digest",
]


def config_digest(cfg) -> str:
    """Stable sha256 hex digest of a (possibly nested) config dataclass."""
    if dataclasses.is_dataclass(cfg) and not isinstance(cfg, type):
        payload = dataclasses.asdict(cfg)
    else:
        payload = cfg
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class IFLearnerConfig:
    """Everything one two-stage fit needs.

    ``seed`` drives only the second-stage fit; nuisance randomness
    (fold draws, per-fold learner seeds) is governed by
    ``crossfit.seed``.  The clip floors and binary mode must agree
    between the crossfit and pseudo-outcome halves, since the former
    produces what the latter validates.
    """

    crossfit: CrossfitConfig = field(default_factory=CrossfitConfig)
    pseudo: PseudoOutcomeSpec = field(default_factory=PseudoOutcomeSpec)
    second_stage: LearnerSpec = field(default_factory=LearnerSpec)
    seed: int = 0
    winsorize: float | None = None  # symmetric quantile, e.g. 0.01; off by default

    def __post_init__(self):
        if self.crossfit.eps_clip != self.pseudo.eps_clip:
            raise ConfigError(
                "eps_clip differs between crossfit and pseudo-outcome configs"
            )
        if self.crossfit.p_clip != self.pseudo.p_clip:
            raise ConfigError(
                "p_clip differs between crossfit and pseudo-outcome configs"
            )
        if self.crossfit.binary_outcome != self.pseudo.binary_outcome:
            raise ConfigError(
                "binary_outcome flag differs between crossfit and pseudo configs"
            )
        if self.winsorize is not None and not 0.0 < self.winsorize < 0.5:
            raise ConfigError(
                f"winsorize quantile must be in (0, 0.5), got {self.winsorize}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "IFLearnerConfig":
        d = dict(d)
        if isinstance(d.get("crossfit"), dict):
            d["crossfit"] = CrossfitConfig.from_dict(d["crossfit"])
        if isinstance(d.get("pseudo"), dict):
            d["pseudo"] = PseudoOutcomeSpec.from_dict(d["pseudo"])
        if isinstance(d.get("second_stage"), dict):
            d["second_stage"] = LearnerSpec.from_dict(d["second_stage"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad learner config: {e}") from None


class TargetModel:
    """A fitted target-function estimate with provenance."""

    def __init__(self, model: FittedModel, provenance: dict):
        self._model = model
        self.provenance = provenance
        self.n_features = model.n_features

    def predict(self, Xq) -> np.ndarray:
        return self._model.predict(Xq)

    def __repr__(self) -> str:
        return (
            f"TargetModel(target={self.provenance.get('target')!r}, "
            f"n={self.provenance.get('n')}, d={self.n_features})"
        )


def predict_target(model: TargetModel, x) -> float:
    """Pointwise estimate at a single covariate vector x."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise SchemaError(
            f"query point has shape {x.shape}, expected ({model.n_features},)"
        )
    return float(model.predict(x.reshape(1, -1))[0])


def winsorize_values(d: np.ndarray, q: float) -> np.ndarray:
    """Clip to the empirical [q, 1-q] quantile range (symmetric)."""
    if not 0.0 < q < 0.5:
        raise ConfigError(f"winsorize quantile must be in (0, 0.5), got {q}")
    lo, hi = np.quantile(d, [q, 1.0 - q])
    return np.clip(d, lo, hi)


@dataclass(frozen=True)
class TrueNuisances:
    """Ground-truth nuisance functions (or precomputed per-row arrays).

    Each field may be a callable applied row-wise to a covariate
    vector, a scalar, or an array aligned with the dataset.  For
    missing-data targets ``mu1`` holds the observed-outcome regression
    and ``mu0`` may be anything (it is ignored).
    """

    mu0: object = 0.0
    mu1: object = 0.0
    pi: object = 0.5

    def as_estimates(self, data: Dataset, eps_clip: float) -> NuisanceEstimates:
        def evaluate(spec):
            if callable(spec):
                return np.asarray([float(spec(x)) for x in data.X])
            if np.isscalar(spec):
                return np.full(data.n, float(spec))
            arr = np.asarray(spec, dtype=float).ravel()
            if arr.shape[0] != data.n:
                raise SchemaError(
                    f"true-nuisance array has length {arr.shape[0]}, "
                    f"expected {data.n}"
                )
            return arr

        pi = evaluate_propensity(data, self.pi, eps_clip)
        return NuisanceEstimates(
            mu0_hat=evaluate(self.mu0), mu1_hat=evaluate(self.mu1), pi_hat=pi
        )


def _provenance(cfg, data: Dataset, target: str, variant: str) -> dict:
    return {
        "variant": variant,
        "target": target,
        "config_hash": config_digest(cfg),
        "n": data.n,
        "d": data.d,
        "seed": getattr(cfg, "seed", None),
        "stream_version": rngmod.STREAM_VERSION,
    }


def _second_stage(cfg: IFLearnerConfig, data: Dataset, d: np.ndarray, variant: str):
    if cfg.winsorize is not None:
        d = winsorize_values(d, cfg.winsorize)
    model = fit_learner(cfg.second_stage, data.X, d, seed=cfg.seed)
    return TargetModel(model, _provenance(cfg, data, cfg.pseudo.target, variant))


def fit_if_learner(
    data: Dataset,
    cfg: IFLearnerConfig,
    known_propensity=None,
    folds: FoldAssignment | None = None,
) -> TargetModel:
    """Cross-fit nuisances, build pseudo-outcomes, regress them on X.

    With ``target = regression_mean`` the pseudo-outcome is y itself,
    so the whole pipeline collapses to fitting the second stage
    directly on (X, y); no nuisance models are touched.

    ``known_propensity`` bypasses propensity estimation (designs where
    assignment probabilities are known); ``folds`` injects a fixed
    fold assignment, mainly for tests.
    """
    if cfg.pseudo.target == "regression_mean":
        return _second_stage(cfg, data, np.array(data.y), "if_learner")
    if data.n < 2 * cfg.crossfit.n_folds:
        raise EstimationError(
            f"insufficient data: n={data.n} with {cfg.crossfit.n_folds} folds "
            "(need n >= 2K)"
        )
    nuis = crossfit_nuisances(
        data, cfg.crossfit, folds=folds, known_propensity=known_propensity
    )
    d = build_pseudo_outcomes(data, nuis, cfg.pseudo).d
    return _second_stage(cfg, data, d, "if_learner")


def fit_oracle_learner(
    data: Dataset,
    true_nuisances: TrueNuisances,
    pseudo: PseudoOutcomeSpec,
    second_stage: LearnerSpec,
    seed: int = 0,
) -> TargetModel:
    """Infeasible benchmark: exact nuisances, no cross-fitting.

    The second-stage regression sees the true per-row signal
    D built from the real nuisance functions, so its error is purely
    second-stage regression error.
    """
    cfg = IFLearnerConfig(
        crossfit=CrossfitConfig(
            eps_clip=pseudo.eps_clip,
            p_clip=pseudo.p_clip,
            binary_outcome=pseudo.binary_outcome,
        ),
        pseudo=pseudo,
        second_stage=second_stage,
        seed=seed,
    )
    if pseudo.target == "regression_mean":
        return _second_stage(cfg, data, np.array(data.y), "oracle")
    nuis = true_nuisances.as_estimates(data, pseudo.eps_clip)
    d = build_pseudo_outcomes(data, nuis, pseudo).d
    return _second_stage(cfg, data, d, "oracle")


class _FunctionalOfArms(FittedModel):
    """Applies a functional to two arm-wise regression fits."""

    def __init__(self, m0: FittedModel, m1: FittedModel, combine):
        self._m0 = m0
        self._m1 = m1
        self._combine = combine
        self.n_features = m0.n_features

    def predict(self, Xq) -> np.ndarray:
        return np.asarray(
            self._combine(self._m0.predict(Xq), self._m1.predict(Xq)), dtype=float
        )


class _SingleArmModel(FittedModel):
    def __init__(self, m: FittedModel):
        self._m = m
        self.n_features = m.n_features

    def predict(self, Xq) -> np.ndarray:
        return self._m.predict(Xq)


_PLUGIN_COMBINERS = {
    "cate_aipw": lambda m0, m1: m1 - m0,
    "cate_ht": lambda m0, m1: m1 - m0,
    "cate_plugin": lambda m0, m1: m1 - m0,
    "risk_ratio": risk_ratio_value,
    "odds_ratio": odds_ratio_value,
}


def fit_plugin_learner(data: Dataset, cfg: IFLearnerConfig) -> TargetModel:
    """Uncorrected baseline: contrast (or ratio) of arm-wise fits.

    Fits the outcome learner separately on each arm's rows (all of
    them, no fold splitting: there is no pseudo-outcome reuse to
    protect against) and combines pointwise predictions with the
    target functional.  For missing-data and plain-regression targets
    this degenerates to a single regression fit.
    """
    target = cfg.pseudo.target
    cf = cfg.crossfit

    def fit_arm(rows, tag):
        if rows.size == 0:
            raise EstimationError("degenerate arm: no rows to fit the plug-in on")
        seed = rngmod.derive_seed(cfg.seed, "plugin", tag)
        if cf.binary_outcome:
            return fit_probability(
                cf.outcome_spec, data.X[rows], data.y[rows], seed=seed, clip=cf.p_clip
            )
        return fit_learner(cf.outcome_spec, data.X[rows], data.y[rows], seed=seed)

    if target == "regression_mean":
        model = fit_learner(
            cf.outcome_spec, data.X, data.y, seed=rngmod.derive_seed(cfg.seed, "plugin", "all")
        )
        return TargetModel(_SingleArmModel(model), _provenance(cfg, data, target, "plugin"))
    if data.w is None:
        raise SchemaError(f"target {target!r} needs an indicator column")
    if target == "mar_mean":
        observed = np.flatnonzero(data.w == 1)
        model = fit_arm(observed, "mu")
        return TargetModel(_SingleArmModel(model), _provenance(cfg, data, target, "plugin"))
    m0 = fit_arm(np.flatnonzero(data.w == 0), "mu0")
    m1 = fit_arm(np.flatnonzero(data.w == 1), "mu1")
    combined = _FunctionalOfArms(m0, m1, _PLUGIN_COMBINERS[target])
    return TargetModel(combined, _provenance(cfg, data, target, "plugin"))
