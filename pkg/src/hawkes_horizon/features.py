"""Per-item streaming state and the feature vector built from it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import (
    VelocityTracker,
    milestone_times,
    quantile_time_from_milestones,
    window_counts,
)
from .hawkes_core import Cascade

HOUR = 3600.0
DAY = 86400.0
FEATURE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FeatureSchema:
    """Layout of the feature vector: static attributes, then temporal features.

    Temporal part: N(s), velocity over ``base_window * m`` for each
    multiplier, counts over each trailing window, s, log(1 + N(s)), mean
    event time, and approximate quantile times for each gamma.
    """

    n_static: int
    base_window: float = HOUR
    velocity_multipliers: tuple[float, ...] = (1.0, 4.0, 16.0)
    trailing_windows: tuple[float, ...] = (HOUR, 6 * HOUR, DAY)
    gammas: tuple[float, ...] = (0.5, 0.9)
    n_buckets: int = 64
    version: int = FEATURE_SCHEMA_VERSION

    @property
    def velocity_windows(self) -> tuple[float, ...]:
        return tuple(self.base_window * m for m in self.velocity_multipliers)

    @property
    def names(self) -> list[str]:
        return (
            [f"static_{i}" for i in range(self.n_static)]
            + ["n_s"]
            + [f"velocity_{w:g}s" for w in self.velocity_windows]
            + [f"count_{w:g}s" for w in self.trailing_windows]
            + ["age", "log1p_n_s", "mean_time"]
            + [f"t_gamma_{g:g}" for g in self.gammas]
        )

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_dict(self) -> dict:
        return {
            "n_static": self.n_static,
            "base_window": self.base_window,
            "velocity_multipliers": list(self.velocity_multipliers),
            "trailing_windows": list(self.trailing_windows),
            "gammas": list(self.gammas),
            "n_buckets": self.n_buckets,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            n_static=int(d["n_static"]),
            base_window=float(d["base_window"]),
            velocity_multipliers=tuple(map(float, d["velocity_multipliers"])),
            trailing_windows=tuple(map(float, d["trailing_windows"])),
            gammas=tuple(map(float, d["gammas"])),
            n_buckets=int(d["n_buckets"]),
            version=int(d["version"]),
        )


class ItemState:
    """Everything the forecaster keeps per item: static attributes plus one
    :class:`VelocityTracker` per distinct window length."""

    def __init__(self, schema: FeatureSchema, static_attrs=()):
        self.schema = schema
        self.static_attrs = np.asarray(static_attrs, dtype=float)
        windows = sorted(set(schema.velocity_windows) | set(schema.trailing_windows))
        self.trackers = {w: VelocityTracker(w, schema.n_buckets) for w in windows}
        self._main = self.trackers[windows[0]]

    @classmethod
    def from_cascade(cls, schema: FeatureSchema, cascade: Cascade, until: float = math.inf):
        state = cls(schema, cascade.static_attrs)
        for t in cascade.times[: cascade.count_through(until)]:
            state.observe(float(t))
        return state

    def observe(self, t: float, mark: float = 1.0) -> None:
        for tr in self.trackers.values():
            tr.observe(t, mark)

    @property
    def n(self) -> int:
        return self._main.total_count

    def features(self, s: float) -> np.ndarray:
        sc = self.schema
        main = self._main
        n = main.total_count
        vel = [self.trackers[w].velocity(s) for w in sc.velocity_windows]
        cnt = [float(self.trackers[w].count_in_window(s)) for w in sc.trailing_windows]
        ms = main.milestones
        tg = [quantile_time_from_milestones(ms, main.last_time, n, g) for g in sc.gammas]
        return _assemble(sc, self.static_attrs, n, vel, cnt, s, main.mean_time(), tg)

    def state_size(self) -> int:
        return self.static_attrs.size + sum(t.state_size() for t in self.trackers.values())


def _assemble(schema, static, n, vel, cnt, s, mean_t, tg) -> np.ndarray:
    static = np.asarray(static, dtype=float)
    if static.size != schema.n_static:
        raise ValueError(f"expected {schema.n_static} static attributes, got {static.size}")
    temporal = [float(n), *vel, *cnt, float(s), math.log1p(n), mean_t, *tg]
    return np.concatenate([static, np.asarray(temporal, dtype=float)])


def extract_features(cascade: Cascade, s: float, schema: FeatureSchema) -> np.ndarray:
    """Feature vector at prediction time ``s`` from a stored cascade.

    Produces the same values as ``ItemState.from_cascade(...).features(s)``
    (identical bucket arithmetic) without streaming through the events.
    """
    if s < 0:
        raise ValueError("prediction time must be >= 0")
    times = cascade.times
    n = cascade.count_through(s)
    seen = times[:n]
    vel = [window_counts(seen, s, w, schema.n_buckets) / w for w in schema.velocity_windows]
    cnt = [float(window_counts(seen, s, w, schema.n_buckets)) for w in schema.trailing_windows]
    # left-to-right sum, same rounding as the tracker's running total
    mean_t = float(np.cumsum(seen)[-1]) / n if n else 0.0
    last = float(seen[-1]) if n else -math.inf
    ms = milestone_times(seen)
    tg = [quantile_time_from_milestones(ms, last, n, g) for g in schema.gammas]
    return _assemble(schema, cascade.static_attrs, n, vel, cnt, s, mean_t, tg)
