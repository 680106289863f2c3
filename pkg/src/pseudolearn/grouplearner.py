"""Group-wise target inference after quantile binning.

The data are split into an auxiliary half and an estimation half.
The auxiliary half trains a scoring model (a plug-in contrast or the
bias-corrected two-stage learner) plus fresh nuisance fits; the
estimation half is sorted into quantile groups of the score, and each
group receives an efficient (or Horvitz-Thompson) average of its
pseudo-outcomes, an unbiased variance for that average, and a
symmetric confidence interval.

Every quantity entering a group average comes from models fit on the
disjoint auxiliary half, so within-group inference needs no further
correction for adaptivity.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtri

from . import rng as rngmod
from .crossfit import evaluate_propensity
from .data import Dataset, NuisanceEstimates
from .errors import ConfigError, EstimationError, SchemaError
from .iflearner import (
    IFLearnerConfig,
    config_digest,
    fit_if_learner,
    fit_plugin_learner,
)
from .learners import fit_learner, fit_probability
from .pseudo import build_pseudo_outcomes, ht_pseudo

__all__ = [
    "GroupConfig",
    "GroupEstimates",
    "fit_group_learner",
    "group_efficient_estimate",
    "group_ht_estimate",
]

FIRST_STAGES = ("plugin", "if_learner")
SECOND_STAGE_ESTIMATORS = ("eif", "ht")

# contrast-style targets for which a Horvitz-Thompson group average
# is meaningful
_HT_COMPATIBLE = ("cate_aipw", "cate_ht", "cate_plugin")


@dataclass(frozen=True)
class GroupConfig:
    """Settings for one group-wise inference fit.

    ``seed`` governs the auxiliary/estimation split and the auxiliary
    nuisance fits; the first-stage scoring model draws its randomness
    from ``if_config`` as usual.
    """

    n_groups: int = 5
    split_fraction: float = 0.5  # share of rows in the auxiliary half
    first_stage: str = "if_learner"
    second_stage_estimator: str = "eif"
    ci_level: float = 0.95
    if_config: IFLearnerConfig = field(default_factory=IFLearnerConfig)
    use_t_intervals: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.n_groups) != self.n_groups or self.n_groups < 2:
            raise ConfigError(f"n_groups must be an integer >= 2, got {self.n_groups}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(
                f"split_fraction must be in (0, 1), got {self.split_fraction}"
            )
        if self.first_stage not in FIRST_STAGES:
            raise ConfigError(
                f"first_stage must be one of {FIRST_STAGES}, got {self.first_stage!r}"
            )
        if self.second_stage_estimator not in SECOND_STAGE_ESTIMATORS:
            raise ConfigError(
                f"second_stage_estimator must be one of {SECOND_STAGE_ESTIMATORS}, "
                f"got {self.second_stage_estimator!r}"
            )
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError(f"ci_level must be in (0, 1), got {self.ci_level}")
        if (
            self.second_stage_estimator == "ht"
            and self.if_config.pseudo.target not in _HT_COMPATIBLE
        ):
            raise ConfigError(
                "Horvitz-Thompson group averages are defined for treatment "
                f"contrasts only, not target {self.if_config.pseudo.target!r}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "GroupConfig":
        d = dict(d)
        if isinstance(d.get("if_config"), dict):
            d["if_config"] = IFLearnerConfig.from_dict(d["if_config"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad group config: {e}") from None


def group_efficient_estimate(values) -> tuple[float, float]:
    """Mean and unbiased variance-of-the-mean of one group's signals.

    The variance is 1/(n (n-1)) * sum((d - mean)^2), undefined below
    two rows.
    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n < 2:
        raise EstimationError(
            f"variance undefined: group has {n} row(s), needs at least 2"
        )
    if not np.all(np.isfinite(v)):
        raise SchemaError("group pseudo-outcomes must be finite")
    psi = float(v.mean())
    var = float(np.sum((v - psi) ** 2) / (n * (n - 1)))
    return psi, var


def group_ht_estimate(y, w, pi) -> tuple[float, float]:
    """Horvitz-Thompson mean and variance-of-the-mean for one group."""
    d = np.atleast_1d(np.asarray(ht_pseudo(y, w, pi), dtype=float))
    return group_efficient_estimate(d)


def _critical_values(cfg: GroupConfig, n_g: np.ndarray) -> np.ndarray:
    if cfg.use_t_intervals:
        return stats.t.ppf(1.0 - (1.0 - cfg.ci_level) / 2.0, df=n_g - 1)
    z = float(ndtri((1.0 + cfg.ci_level) / 2.0))
    return np.full(n_g.shape, z)


@dataclass(frozen=True)
class GroupEstimates:
    """Per-group targets with variances and confidence intervals.

    ``cutpoints`` are the empirical score quantiles separating the
    groups; a score exactly equal to a cutpoint belongs to the lower
    group.  Arrays are index-aligned, one entry per group.
    """

    cutpoints: np.ndarray
    psi_hat: np.ndarray
    var_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_g: np.ndarray
    ci_level: float = 0.95
    provenance: dict = field(default_factory=dict, compare=False)
    scorer: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("cutpoints", "psi_hat", "var_hat", "ci_lo", "ci_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"{name} must be finite")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        counts = np.asarray(self.n_g, dtype=np.int64).copy()
        counts.flags.writeable = False
        object.__setattr__(self, "n_g", counts)
        g = self.psi_hat.size
        if g < 1 or self.cutpoints.size != g - 1:
            raise SchemaError(
                f"{g} groups need {g - 1} cutpoints, got {self.cutpoints.size}"
            )
        for name in ("var_hat", "ci_lo", "ci_hi", "n_g"):
            if getattr(self, name).size != g:
                raise SchemaError(f"{name} must have one entry per group")
        if np.any(np.diff(self.cutpoints) < 0):
            raise SchemaError("cutpoints must be nondecreasing")
        if np.any(self.var_hat < 0):
            raise SchemaError("variance estimates must be nonnegative")
        if np.any(self.ci_lo > self.psi_hat) or np.any(self.ci_hi < self.psi_hat):
            raise SchemaError("intervals must bracket their point estimates")
        if np.any(self.n_g < 1):
            raise SchemaError("every group must contain at least one row")

    @property
    def n_groups(self) -> int:
        return int(self.psi_hat.size)

    def assign(self, scores) -> np.ndarray:
        """Group index for each score; ties at a cutpoint go low."""
        s = np.asarray(scores, dtype=float)
        return np.searchsorted(self.cutpoints, s, side="left")

    def predict(self, Xq) -> np.ndarray:
        """Step-function estimate: score, bin, return the group mean."""
        if self.scorer is None:
            raise ConfigError(
                "no first-stage model attached; only estimates produced by "
                "fit_group_learner can score new points"
            )
        return self.psi_hat[self.assign(self.scorer.predict(Xq))]

    def to_csv(self, path) -> None:
        """One row per group: g, n_g, psi_hat, var_hat, ci_lo, ci_hi."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["g", "n_g", "psi_hat", "var_hat", "ci_lo", "ci_hi"])
            for g in range(self.n_groups):
                writer.writerow(
                    [
                        g + 1,
                        int(self.n_g[g]),
                        _g17(self.psi_hat[g]),
                        _g17(self.var_hat[g]),
                        _g17(self.ci_lo[g]),
                        _g17(self.ci_hi[g]),
                    ]
                )

    def to_json(self) -> str:
        payload = {
            "ci_level": self.ci_level,
            "cutpoints": [float(c) for c in self.cutpoints],
            "groups": [
                {
                    "g": g + 1,
                    "n_g": int(self.n_g[g]),
                    "psi_hat": float(self.psi_hat[g]),
                    "var_hat": float(self.var_hat[g]),
                    "ci_lo": float(self.ci_lo[g]),
                    "ci_hi": float(self.ci_hi[g]),
                }
                for g in range(self.n_groups)
            ],
            "provenance": self.provenance,
        }
        return json.dumps(payload, sort_keys=True)


def _g17(v: float) -> str:
    # 17 significant digits round-trip a double exactly
    return format(float(v), ".17g")


def _fit_arm_model(icfg: IFLearnerConfig, X, y, arm: int, seed: int):
    cf = icfg.crossfit
    if X.shape[0] == 0:
        raise EstimationError(
            f"degenerate arm: auxiliary split has no rows with w={arm}"
        )
    if cf.binary_outcome:
        return fit_probability(cf.outcome_spec, X, y, seed=seed, clip=cf.p_clip)
    return fit_learner(cf.outcome_spec, X, y, seed=seed)


def _estimation_propensity(
    aux: Dataset,
    est: Dataset,
    cfg: GroupConfig,
    pi_known_est: np.ndarray | None,
) -> np.ndarray:
    if pi_known_est is not None:
        return pi_known_est
    cf = cfg.if_config.crossfit
    prop = fit_probability(
        cf.propensity_spec,
        aux.X,
        aux.w.astype(float),
        seed=rngmod.derive_seed(cfg.seed, "nuisance", "pi"),
        clip=cf.eps_clip,
    )
    return prop.predict(est.X)


def _aux_nuisances(
    aux: Dataset,
    est: Dataset,
    cfg: GroupConfig,
    pi_known_est: np.ndarray | None,
) -> NuisanceEstimates:
    """Fit nuisances on the auxiliary half, predict the estimation half."""
    icfg = cfg.if_config
    mask1 = aux.w == 1
    m0 = _fit_arm_model(
        icfg,
        aux.X[~mask1],
        aux.y[~mask1],
        0,
        rngmod.derive_seed(cfg.seed, "nuisance", "mu0"),
    )
    m1 = _fit_arm_model(
        icfg,
        aux.X[mask1],
        aux.y[mask1],
        1,
        rngmod.derive_seed(cfg.seed, "nuisance", "mu1"),
    )
    return NuisanceEstimates(
        mu0_hat=m0.predict(est.X),
        mu1_hat=m1.predict(est.X),
        pi_hat=_estimation_propensity(aux, est, cfg, pi_known_est),
    )


def fit_group_learner(
    data: Dataset,
    cfg: GroupConfig,
    known_propensity=None,
) -> GroupEstimates:
    """Split, score, bin by score quantiles, and estimate per group.

    ``known_propensity`` may be a scalar, a callable of one covariate
    row, or an array aligned with the full dataset; it is evaluated
    before the auxiliary/estimation split.
    """
    if data.w is None:
        raise SchemaError("group inference needs a treatment/indicator column")
    n = data.n
    G = cfg.n_groups
    n_aux = int(round(cfg.split_fraction * n))
    n_est = n - n_aux
    if n_aux < 1 or n_est < 1:
        raise EstimationError(
            f"cannot split {n} rows into non-empty halves at "
            f"fraction {cfg.split_fraction}"
        )
    if n_est < 2 * G:
        raise EstimationError(
            f"grouping degenerate: estimation split has {n_est} rows, "
            f"needs at least 2 per group for {G} groups"
        )
    pi_full = None
    if known_propensity is not None:
        pi_full = evaluate_propensity(
            data, known_propensity, eps_clip=cfg.if_config.crossfit.eps_clip
        )
    perm = rngmod.stream(cfg.seed, "split").permutation(n)
    aux_rows = np.sort(perm[:n_aux])
    est_rows = np.sort(perm[n_aux:])
    aux = data.subset(aux_rows)
    est = data.subset(est_rows)
    pi_known_aux = pi_full[aux_rows] if pi_full is not None else None
    pi_known_est = pi_full[est_rows] if pi_full is not None else None

    if cfg.first_stage == "plugin":
        scorer = fit_plugin_learner(aux, cfg.if_config)
    else:
        scorer = fit_if_learner(aux, cfg.if_config, known_propensity=pi_known_aux)
    scores = scorer.predict(est.X)

    if cfg.second_stage_estimator == "ht":
        pi_hat = _estimation_propensity(aux, est, cfg, pi_known_est)
        d = np.asarray(ht_pseudo(est.y, est.w.astype(float), pi_hat), dtype=float)
    else:
        nuis = _aux_nuisances(aux, est, cfg, pi_known_est)
        d = build_pseudo_outcomes(est, nuis, cfg.if_config.pseudo).d

    cutpoints = np.quantile(scores, np.arange(1, G) / G)
    gidx = np.searchsorted(cutpoints, scores, side="left")
    counts = np.bincount(gidx, minlength=G)
    for g in range(G):
        if counts[g] < 2:
            raise EstimationError(
                f"grouping degenerate: group {g + 1} of {G} has "
                f"{counts[g]} row(s) after the quantile split"
            )

    psi = np.empty(G)
    var = np.empty(G)
    for g in range(G):
        psi[g], var[g] = group_efficient_estimate(d[gidx == g])
    crit = _critical_values(cfg, counts)
    half = crit * np.sqrt(var)
    provenance = {
        "variant": "group_if_learner",
        "first_stage": cfg.first_stage,
        "second_stage_estimator": cfg.second_stage_estimator,
        "target": cfg.if_config.pseudo.target,
        "n": int(n),
        "n_aux": int(n_aux),
        "n_est": int(n_est),
        "n_groups": int(G),
        "ci_level": float(cfg.ci_level),
        "pseudo_mean": float(d.mean()),
        "config_hash": config_digest(cfg),
        "seed": int(cfg.seed),
        "stream_version": rngmod.STREAM_VERSION,
    }
    return GroupEstimates(
        cutpoints=cutpoints,
        psi_hat=psi,
        var_hat=var,
        ci_lo=psi - half,
        ci_hi=psi + half,
        n_g=counts,
        ci_level=cfg.ci_level,
        provenance=provenance,
        scorer=scorer,
    )
