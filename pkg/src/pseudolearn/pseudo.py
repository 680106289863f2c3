"""Pseudo-outcome constructors from uncentered efficient influence functions.

The two-stage estimators in this package regress a per-observation
signal D on the covariates.  For each supported target functional this
module builds that signal: an unbiased-given-true-nuisances transform
of (y, w, nuisance values) whose conditional expectation at x equals
the target.  Plug-in baselines live here too so comparisons share one
code path.

Every constructor is a pure total function of its arguments and
broadcasts over numpy arrays.  Range protection (clipping propensities
and binary-outcome means away from 0 and 1) is the nuisance layer's
job; the constructors only refuse values that would divide by zero,
while :func:`build_pseudo_outcomes` enforces the configured floors.

Centered potential-outcome influence terms used throughout:

    IF_mu1 = (w / pi) * (y - mu1)
    IF_mu0 = ((1 - w) / (1 - pi)) * (y - mu0)

A differentiable functional f(mu0, mu1) then has the uncentered signal
``IF_mu0 * df/dmu0 + IF_mu1 * df/dmu1 + f(mu0, mu1)`` (delta method on
the per-arm means); the treatment-effect and ratio constructors below
are all instances of this chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EPS_CLIP_DEFAULT, P_CLIP_DEFAULT, Dataset, NuisanceEstimates
from .errors import ConfigError, DomainError, SchemaError

__all__ = [
    "TARGETS",
    "PseudoOutcomeSpec",
    "PseudoOutcomes",
    "aipw_pseudo",
    "ht_pseudo",
    "plugin_cate",
    "rr_pseudo",
    "transform_pseudo",
    "mar_pseudo",
    "build_pseudo_outcomes",
    "risk_ratio_value",
    "risk_ratio_partials",
    "odds_ratio_value",
    "odds_ratio_partials",
]

TARGETS = (
    "cate_aipw",
    "cate_ht",
    "cate_plugin",
    "risk_ratio",
    "odds_ratio",
    "mar_mean",
    "regression_mean",
)

_BINARY_TARGETS = ("risk_ratio", "odds_ratio")


@dataclass(frozen=True)
class PseudoOutcomeSpec:
    """Selects the target functional and carries the clip floors."""

    target: str = "cate_aipw"
    eps_clip: float = EPS_CLIP_DEFAULT
    p_clip: float = P_CLIP_DEFAULT
    binary_outcome: bool = False

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ConfigError(
                f"unknown target {self.target!r}; expected one of {TARGETS}"
            )
        for name, v in (("eps_clip", self.eps_clip), ("p_clip", self.p_clip)):
            if not 0.0 < v < 0.5:
                raise ConfigError(f"{name} must be in (0, 0.5), got {v}")
        if self.target in _BINARY_TARGETS and not self.binary_outcome:
            raise ConfigError(
                f"target {self.target!r} is only defined for binary outcomes; "
                "set binary_outcome=True"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoOutcomeSpec":
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad pseudo-outcome spec: {e}") from None


@dataclass(frozen=True)
class PseudoOutcomes:
    """Per-row pseudo-outcome values, ready for second-stage regression."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).ravel()
        if not np.all(np.isfinite(d)):
            raise DomainError("pseudo-outcomes contain a non-finite value")
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]


def _prep(*arrays):
    out = [np.asarray(a, dtype=float) for a in arrays]
    return out


def _maybe_scalar(x: np.ndarray):
    return x.item() if np.ndim(x) == 0 else x


def _check_pi(pi: np.ndarray):
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise DomainError("propensity must lie strictly inside (0, 1)")


def _check_indicator(w: np.ndarray, name: str = "w"):
    if not np.all(np.isin(w, (0.0, 1.0))):
        raise DomainError(f"{name} must be 0 or 1")


def ht_pseudo(y, w, pi):
    """Inverse-propensity contrast signal (w/pi - (1-w)/(1-pi)) * y.

    Unbiased for the treatment contrast at x when ``pi`` is the true
    propensity, but ignores the outcome regressions entirely, so its
    variance blows up as pi nears 0 or 1.
    """
    y, w, pi = _prep(y, w, pi)
    _check_indicator(w)
    _check_pi(pi)
    return _maybe_scalar((w / pi - (1.0 - w) / (1.0 - pi)) * y)


def plugin_cate(mu0, mu1):
    """Plug-in contrast mu1 - mu0; no bias correction."""
    mu0, mu1 = _prep(mu0, mu1)
    return _maybe_scalar(mu1 - mu0)


def aipw_pseudo(y, w, pi, mu0, mu1):
    """Doubly robust treatment-effect signal.

    The plug-in contrast plus inverse-propensity-weighted residuals:
    correct if either the outcome means or the propensity are correct,
    and conditionally unbiased for mu1(x) - mu0(x) under the truth.
    """
    y, w, pi, mu0, mu1 = _prep(y, w, pi, mu0, mu1)
    _check_indicator(w)
    _check_pi(pi)
    out = (
        (mu1 - mu0)
        + (w / pi) * (y - mu1)
        - ((1.0 - w) / (1.0 - pi)) * (y - mu0)
    )
    return _maybe_scalar(out)


def rr_pseudo(y, w, pi, mu0, mu1, mu0_floor: float = P_CLIP_DEFAULT):
    """Risk-ratio signal: delta-method correction of mu1/mu0.

    Requires ``mu0 >= mu0_floor`` because mu0 appears squared in a
    denominator; binary-outcome clipping guarantees the floor upstream.
    """
    y, w, pi, mu0, mu1 = _prep(y, w, pi, mu0, mu1)
    _check_indicator(w)
    _check_pi(pi)
    if np.any(mu0 < mu0_floor):
        raise DomainError(
            f"rr_pseudo needs mu0 >= {mu0_floor} (division by mu0^2)"
        )
    if_mu1 = (w / pi) * (y - mu1)
    if_mu0 = ((1.0 - w) / (1.0 - pi)) * (y - mu0)
    out = (1.0 / mu0) * if_mu1 - (mu1 / mu0**2) * if_mu0 + mu1 / mu0
    return _maybe_scalar(out)


def transform_pseudo(y, w, pi, mu0, mu1, df_dmu0, df_dmu1, f):
    """Signal for an arbitrary smooth functional f(mu0, mu1).

    ``f``, ``df_dmu0`` and ``df_dmu1`` are callables evaluated at the
    plugged-in (mu0, mu1); the chain rule combines the per-arm
    influence terms with those partials and re-adds f itself.
    """
    y, w, pi, mu0, mu1 = _prep(y, w, pi, mu0, mu1)
    _check_indicator(w)
    _check_pi(pi)
    g0 = np.asarray(df_dmu0(mu0, mu1), dtype=float)
    g1 = np.asarray(df_dmu1(mu0, mu1), dtype=float)
    f0 = np.asarray(f(mu0, mu1), dtype=float)
    if not (
        np.all(np.isfinite(g0)) and np.all(np.isfinite(g1)) and np.all(np.isfinite(f0))
    ):
        raise DomainError("transform partials or value non-finite at (mu0, mu1)")
    if_mu1 = (w / pi) * (y - mu1)
    if_mu0 = ((1.0 - w) / (1.0 - pi)) * (y - mu0)
    return _maybe_scalar(if_mu0 * g0 + if_mu1 * g1 + f0)


def mar_pseudo(y, a, pi, mu):
    """Missing-at-random mean signal D = (a/pi) * (y - mu) + mu.

    Here ``a`` indicates an observed outcome, ``pi`` the observation
    probability given x and ``mu`` the regression among observed rows.
    When outcomes are missing at random, E[a(y - mu) | x] = 0 at the
    true nuisances, so E[D | x] recovers the complete-data mean E[y | x]
    while unobserved rows contribute their imputed ``mu``.  Double
    robustness: the conditional mean of D is correct if either ``pi``
    or ``mu`` is.  ``y`` on rows with a = 0 is multiplied by zero and
    never read.
    """
    y, a, pi, mu = _prep(y, a, pi, mu)
    _check_indicator(a, name="a")
    _check_pi(pi)
    return _maybe_scalar((a / pi) * (y - mu) + mu)


def risk_ratio_value(mu0, mu1):
    return _maybe_scalar(np.asarray(mu1, dtype=float) / np.asarray(mu0, dtype=float))


def risk_ratio_partials(mu0, mu1):
    """(d/dmu0, d/dmu1) of mu1/mu0."""
    mu0, mu1 = _prep(mu0, mu1)
    return _maybe_scalar(-mu1 / mu0**2), _maybe_scalar(1.0 / mu0)


def odds_ratio_value(mu0, mu1):
    mu0, mu1 = _prep(mu0, mu1)
    return _maybe_scalar((mu1 * (1.0 - mu0)) / ((1.0 - mu1) * mu0))


def odds_ratio_partials(mu0, mu1):
    """(d/dmu0, d/dmu1) of the odds ratio [mu1/(1-mu1)] / [mu0/(1-mu0)]."""
    mu0, mu1 = _prep(mu0, mu1)
    d0 = -mu1 / ((1.0 - mu1) * mu0**2)
    d1 = (1.0 - mu0) / ((1.0 - mu1) ** 2 * mu0)
    return _maybe_scalar(d0), _maybe_scalar(d1)


def build_pseudo_outcomes(
    data: Dataset,
    nuisances: NuisanceEstimates | None,
    spec: PseudoOutcomeSpec,
) -> PseudoOutcomes:
    """Vectorised pseudo-outcome construction for a whole dataset.

    Enforces the configured clip floors on the nuisance vectors (they are
    produced clipped; arriving outside the floor means a wiring bug)
    and the binary-outcome mode where the target needs it.
    ``regression_mean`` needs no nuisances and simply passes y through.
    """
    if spec.target == "regression_mean":
        return PseudoOutcomes(d=np.array(data.y, dtype=float))
    if data.w is None:
        raise SchemaError(
            f"target {spec.target!r} needs a treatment/observation indicator"
        )
    if nuisances is None:
        raise SchemaError(f"target {spec.target!r} needs nuisance estimates")
    if nuisances.n != data.n:
        raise SchemaError(
            f"nuisances cover {nuisances.n} rows, dataset has {data.n}"
        )
    pi = nuisances.pi_hat
    if np.any(pi < spec.eps_clip) or np.any(pi > 1.0 - spec.eps_clip):
        raise DomainError(
            f"pi_hat outside [{spec.eps_clip}, {1.0 - spec.eps_clip}]; "
            "propensities must arrive clipped"
        )
    if spec.binary_outcome:
        if not np.all(np.isin(data.y, (0.0, 1.0))):
            raise ConfigError(
                f"target {spec.target!r} configured for binary outcomes, "
                "but y contains non-0/1 values"
            )
    y = data.y
    w = data.w.astype(float)
    mu0, mu1 = nuisances.mu0_hat, nuisances.mu1_hat

    if spec.target in _BINARY_TARGETS:
        lo, hi = spec.p_clip, 1.0 - spec.p_clip
        if np.any(mu0 < lo) or np.any(mu0 > hi) or np.any(mu1 < lo) or np.any(mu1 > hi):
            raise DomainError(
                f"binary-outcome means outside [{lo}, {hi}]; "
                "fit them with the probability clip"
            )

    if spec.target == "cate_aipw":
        d = aipw_pseudo(y, w, pi, mu0, mu1)
    elif spec.target == "cate_ht":
        d = ht_pseudo(y, w, pi)
    elif spec.target == "cate_plugin":
        d = plugin_cate(mu0, mu1)
    elif spec.target == "risk_ratio":
        d = rr_pseudo(y, w, pi, mu0, mu1, mu0_floor=spec.p_clip)
    elif spec.target == "odds_ratio":
        d = transform_pseudo(
            y,
            w,
            pi,
            mu0,
            mu1,
            lambda m0, m1: odds_ratio_partials(m0, m1)[0],
            lambda m0, m1: odds_ratio_partials(m0, m1)[1],
            odds_ratio_value,
        )
    else:  # mar_mean: indicator is observation status, mu1_hat is E[y|a=1,x]
        d = mar_pseudo(y, w, pi, mu1)
    return PseudoOutcomes(d=d)
