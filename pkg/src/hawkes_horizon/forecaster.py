"""Horizon-free forecasts from two learned point predictors.

A count regressor ``f_i`` predicts ``log(N(s + d_i) - N(s) + log_offset)``
at each reference horizon ``d_i``; an alpha regressor ``g`` predicts
``log(alpha)``. Any other horizon follows from the exponential-kernel
closed form: the expected increment over ``delta`` is the increment over
``d_i`` scaled by ``(1 - exp(-alpha delta)) / (1 - exp(-alpha d_i))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimators import alpha_mean, alpha_quantile
from .features import DAY, HOUR, FeatureSchema, extract_features
from .gbrt import TreeEnsembleRegressor
from .hawkes_core import INF, Cascade, DomainError, one_minus_exp
from .simulation import make_rng

AGGREGATIONS = ("single", "arithmetic", "geometric")
DEFAULT_REFERENCE_SETS = ((DAY,), (6 * HOUR, 4 * DAY), (6 * HOUR, DAY, 4 * DAY))


class UnsupportedHorizon(ValueError):
    """The model cannot answer queries at this horizon."""


# ---------------------------------------------------------------------------
# Training data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingPolicy:
    """Prediction times per item: ``n_per_item`` ages, log-uniform on [min_age, max_age]."""

    n_per_item: int = 4
    min_age: float = 0.5 * HOUR
    max_age: float = 3 * DAY
    seed: int = 0

    def ages(self, item_index: int) -> np.ndarray:
        rng = make_rng(self.seed, 3, item_index)
        lo, hi = math.log(self.min_age), math.log(self.max_age)
        return np.sort(np.exp(rng.uniform(lo, hi, self.n_per_item)))


@dataclass
class TrainingSet:
    """One row per (item, prediction time).

    ``increments[:, j]`` is ``N(s + horizons[j]) - N(s)`` (events in
    ``(s, s + delta]``); ``INF`` horizons use the final observed count.
    ``alpha_label`` repeats the item-level growth-exponent estimate.
    """

    X: np.ndarray
    item: np.ndarray
    s: np.ndarray
    n_s: np.ndarray
    horizons: tuple[float, ...]
    increments: np.ndarray
    alpha_label: np.ndarray
    final_size: np.ndarray
    schema: FeatureSchema
    dropped: int = 0

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, mask) -> "TrainingSet":
        mask = np.asarray(mask)
        return TrainingSet(self.X[mask], self.item[mask], self.s[mask], self.n_s[mask],
                           self.horizons, self.increments[mask], self.alpha_label[mask],
                           self.final_size[mask], self.schema, self.dropped)

    def column(self, delta: float) -> np.ndarray:
        try:
            return self.increments[:, self.horizons.index(delta)]
        except ValueError:
            raise UnsupportedHorizon(f"no labels for horizon {delta}") from None


def alpha_label(cascade: Cascade, estimator: str = "mean", gamma: float = 0.5) -> float:
    if estimator == "mean":
        return alpha_mean(cascade)
    if estimator == "quantile":
        return alpha_quantile(cascade, gamma)
    raise ValueError(f"unknown alpha estimator {estimator!r}")


def build_training_set(dataset: Sequence[Cascade], horizons: Sequence[float],
                       schema: FeatureSchema, policy: SamplingPolicy = SamplingPolicy(),
                       alpha_estimator: str = "mean", gamma: float = 0.5,
                       item_offset: int = 0) -> TrainingSet:
    """Features and labels for every (item, sampled prediction time).

    An example is dropped (and counted) when the cascade is not observed
    through ``s + max(finite horizons)``, or when an infinite horizon is
    requested and the cascade is flagged truncated (the final observed count
    stands in for N(inf) otherwise). Items whose growth exponent cannot be
    estimated are dropped whole.
    """
    horizons = tuple(float(h) for h in horizons)
    rows, items, ss, nss, incs, alphas, finals = [], [], [], [], [], [], []
    dropped = 0
    for idx, c in enumerate(dataset):
        ages = policy.ages(idx + item_offset)
        try:
            a = alpha_label(c, alpha_estimator, gamma)
        except DomainError:
            dropped += ages.size
            continue
        for s in ages:
            finite = [h for h in horizons if math.isfinite(h)]
            if (finite and s + max(finite) > c.coverage) or (len(finite) < len(horizons) and c.truncated):
                dropped += 1
                continue
            n_s = c.count_through(s)
            inc = [
                (c.count_through(s + h) if math.isfinite(h) else len(c)) - n_s
                for h in horizons
            ]
            rows.append(extract_features(c, s, schema))
            items.append(idx)
            ss.append(s)
            nss.append(n_s)
            incs.append(inc)
            alphas.append(a)
            finals.append(len(c))
    dim = schema.dim
    return TrainingSet(
        X=np.asarray(rows, dtype=float).reshape(-1, dim),
        item=np.asarray(items, dtype=np.int64),
        s=np.asarray(ss, dtype=float),
        n_s=np.asarray(nss, dtype=float),
        horizons=horizons,
        increments=np.asarray(incs, dtype=float).reshape(-1, len(horizons)),
        alpha_label=np.asarray(alphas, dtype=float),
        final_size=np.asarray(finals, dtype=float),
        schema=schema,
        dropped=dropped,
    )


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


def count_label(increment, log_offset: float = 1.0):
    """Training target ``log(increment + log_offset)``; ``log1p`` when the offset is 1."""
    inc = np.asarray(increment, dtype=float)
    return np.log1p(inc) if log_offset == 1.0 else np.log(inc + log_offset)


def inverse_label(Y, log_offset: float = 1.0):
    """Inverse of :func:`count_label`: ``exp(Y) - log_offset`` (``expm1`` when the offset is 1)."""
    Y = np.asarray(Y, dtype=float)
    return np.expm1(Y) if log_offset == 1.0 else np.exp(Y) - log_offset


def default_regressor(seed: int = 0, **hyper) -> TreeEnsembleRegressor:
    return TreeEnsembleRegressor(seed=seed, **hyper)


@dataclass
class ForecastModel:
    """Reference-horizon count regressors plus the growth-exponent regressor."""

    horizons: tuple[float, ...]
    count_models: list
    alpha_model: object
    schema: FeatureSchema
    aggregation: str = "geometric"
    alpha_bounds: tuple[float, float] = (1e-7, 1e2)
    log_offset: float = 1.0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.horizons = tuple(float(h) for h in self.horizons)
        if not self.horizons:
            raise ValueError("need at least one reference horizon")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ValueError("reference horizons must be strictly increasing")
        if any(not (math.isfinite(h) and h > 0) for h in self.horizons):
            raise ValueError("reference horizons must be finite and > 0")
        if len(self.count_models) != len(self.horizons):
            raise ValueError("one count model per reference horizon")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.aggregation == "single" and len(self.horizons) != 1:
            raise ValueError("single aggregation needs exactly one reference horizon")

    @property
    def m(self) -> int:
        return len(self.horizons)

    @property
    def name(self) -> str:
        return "HWK(" + ",".join(format_duration(h) for h in self.horizons) + ")"

    def point_outputs(self, features):
        """Raw regressor outputs: (log-count per reference horizon, alpha-hat).

        For a single feature vector returns ``(array(m), float)``; for a 2-D
        batch returns ``(array(n, m), array(n))``.
        """
        X = np.asarray(features, dtype=float)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        Y = np.column_stack([np.asarray(f.predict(X2), dtype=float) for f in self.count_models])
        log_alpha = np.asarray(self.alpha_model.predict(X2), dtype=float)
        lo, hi = self.alpha_bounds
        alpha = np.clip(np.exp(log_alpha), lo, hi)
        if np.any(~(alpha > 0)):
            raise DomainError("non-positive growth exponent after clamping")
        if single:
            return Y[0], float(alpha[0])
        return Y, alpha

    def reference_increments(self, Y):
        """Increment predicted at each reference horizon: ``exp(Y) - log_offset``, floored at 0."""
        return np.maximum(inverse_label(Y, self.log_offset), 0.0)

    def predict(self, features, N_s, delta):
        mode = self.aggregation
        if mode == "single":
            return predict_single(self, features, N_s, delta)
        if mode == "arithmetic":
            return predict_arithmetic(self, features, N_s, delta)
        return predict_geometric(self, features, N_s, delta)

    def implied_asymptote(self, features):
        """Predicted ``N(inf) - N(s)`` under this model's aggregation."""
        return self.predict(features, 0.0, INF)


def _growth(alpha, delta):
    """``1 - exp(-alpha * delta)`` with ``delta = inf`` giving exactly 1."""
    return one_minus_exp(np.multiply(alpha, delta))


def _check_delta(delta):
    d = np.asarray(delta, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("horizon must be > 0 (inf allowed)")
    return d


def predict_single(model: ForecastModel, features, N_s, delta, reference: int = 0):
    """``N_s + inc_ref * (1 - e^{-a delta}) / (1 - e^{-a d_ref})`` using one reference predictor.

    At ``delta == d_ref`` the ratio is exactly 1, so the result is the point
    predictor's output after the log-offset transform.
    """
    d = _check_delta(delta)
    Y, alpha = model.point_outputs(features)
    Y = np.asarray(Y)
    y_ref = Y[..., reference]
    inc = model.reference_increments(y_ref)
    ratio = _growth(alpha, d) / _growth(alpha, model.horizons[reference])
    out = np.asarray(N_s, dtype=float) + inc * ratio
    return float(out) if out.ndim == 0 else out


def predict_arithmetic(model: ForecastModel, features, N_s, delta):
    """Arithmetic mean of the implied asymptotes ``inc_i / (1 - e^{-a d_i})``, rescaled to ``delta``."""
    if model.m == 1:
        return predict_single(model, features, N_s, delta)
    d = _check_delta(delta)
    Y, alpha = model.point_outputs(features)
    inc = model.reference_increments(np.asarray(Y))
    a = np.asarray(alpha)[..., None]
    asym = inc / _growth(a, np.asarray(model.horizons))
    out = np.asarray(N_s, dtype=float) + asym.mean(axis=-1) * _growth(alpha, d)
    return float(out) if out.ndim == 0 else out


def predict_geometric(model: ForecastModel, features, N_s, delta):
    """Geometric mean of the implied asymptotes, rescaled to ``delta``.

    Computed in log space: ``mean(log inc_i) + log(1 - e^{-a delta})
    - mean(log(1 - e^{-a d_i}))``. A zero reference increment makes the
    aggregate zero.
    """
    if model.m == 1:
        return predict_single(model, features, N_s, delta)
    d = _check_delta(delta)
    Y, alpha = model.point_outputs(features)
    inc = model.reference_increments(np.asarray(Y))
    a = np.asarray(alpha)[..., None]
    with np.errstate(divide="ignore"):
        log_inc = np.log(inc).mean(axis=-1)
        log_scale = np.log(_growth(alpha, d)) - np.log(_growth(a, np.asarray(model.horizons))).mean(axis=-1)
    out = np.asarray(N_s, dtype=float) + np.exp(log_inc + log_scale)
    return float(out) if out.ndim == 0 else out


def fit(training_set: TrainingSet, horizons: Sequence[float] = (DAY,),
        aggregation: str | None = None, hyperparams: dict | None = None,
        regressor_factory: Callable | None = None, log_offset: float = 1.0,
        alpha_bounds: tuple[float, float] = (1e-7, 1e2), seed: int = 0) -> ForecastModel:
    """Train the count regressors and the alpha regressor independently."""
    if len(training_set) == 0:
        raise ValueError("empty training set")
    horizons = tuple(float(h) for h in horizons)
    if aggregation is None:
        aggregation = "single" if len(horizons) == 1 else "geometric"
    hyper = dict(hyperparams or {})
    factory = regressor_factory or (lambda: default_regressor(seed, **hyper))
    X = training_set.X
    count_models = []
    flags = {}
    for h in horizons:
        y = count_label(training_set.column(h), log_offset)
        reg = factory().fit(X, y)
        count_models.append(reg)
        if getattr(reg, "constant_target_", False):
            flags[f"constant_count_target_{h:g}"] = True
    alpha_reg = factory().fit(X, np.log(training_set.alpha_label))
    if getattr(alpha_reg, "constant_target_", False):
        flags["constant_alpha_target"] = True
    return ForecastModel(horizons, count_models, alpha_reg, training_set.schema,
                         aggregation, alpha_bounds, log_offset, flags)


# ---------------------------------------------------------------------------
# Relative growth
# ---------------------------------------------------------------------------


def chi(N_s: float, c: float, Sigma2: float, eps_conf: float) -> float:
    """Extra threshold margin that turns the expected-value rule into a (1 - eps) guarantee."""
    r = Sigma2 / (2 * eps_conf * N_s)
    return r + math.sqrt(2 * (c - 1) * r + r * r)


def relative_growth_decision(lambda_s: float, N_s: float, alpha: float, Sigma2: float,
                             c: float = 2.0, eps_conf: float = 0.2, mode: str = "confident") -> bool:
    """True when the cascade is predicted to end above ``c * N_s``.

    ``mode="expected"`` fires when ``lambda_s >= (c - 1) alpha N_s`` (expected
    final size reaches ``c N_s``); ``mode="confident"`` adds ``chi(N_s)`` to the
    factor so the claim holds with probability at least ``1 - eps_conf``.
    """
    if not c > 1:
        raise DomainError("c must be > 1")
    if not 0 < eps_conf <= 1:
        raise DomainError("eps_conf must lie in (0, 1]")
    if N_s < 1:
        raise DomainError("need N_s >= 1")
    margin = 0.0 if mode == "expected" else chi(N_s, c, Sigma2, eps_conf)
    return lambda_s >= (c - 1 + margin) * alpha * N_s


# ---------------------------------------------------------------------------


def parse_duration(text: str | float) -> float:
    """``'6h'``, ``'4d'``, ``'90s'``, ``'30m'``, ``'inf'`` or a number of seconds."""
    if isinstance(text, (int, float)):
        return float(text)
    t = text.strip().lower()
    if t in ("inf", "infinity", "∞"):
        return INF
    units = {"s": 1.0, "m": 60.0, "h": HOUR, "d": DAY, "w": 7 * DAY}
    if t and t[-1] in units:
        return float(t[:-1]) * units[t[-1]]
    return float(t)


def format_duration(seconds: float) -> str:
    if math.isinf(seconds):
        return "inf"
    for unit, size in (("d", DAY), ("h", HOUR), ("m", 60.0)):
        if seconds >= size and (seconds / size).is_integer():
            return f"{int(seconds / size)}{unit}"
    return f"{seconds:g}s"
