"""Prediction-cost microbenchmark across observed cascade sizes."""

from __future__ import annotations

import gc
import math
import os
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from .features import DAY, HOUR, FeatureSchema, ItemState
from .forecaster import ForecastModel, SamplingPolicy, build_training_set, fit
from .hawkes_core import Cascade
from .simulation import Heterogeneity, make_rng, simulate_batch


@contextmanager
def pinned_cpu():
    """Pin the process to one CPU while timing, where the OS allows it."""
    if not hasattr(os, "sched_getaffinity"):
        yield
        return
    before = os.sched_getaffinity(0)
    try:
        os.sched_setaffinity(0, {min(before)})
    except OSError:
        yield
        return
    try:
        yield
    finally:
        os.sched_setaffinity(0, before)


def bench_cascade(n: int, n_static: int, seed: int = 0) -> Cascade:
    """``n`` event times with a heavy-tailed spread, as in a large cascade."""
    rng = make_rng(seed, 6, n)
    times = np.sort(rng.lognormal(math.log(6 * HOUR), 1.5, n))
    return Cascade(f"bench{n}", times, static_attrs=np.zeros(n_static))


def time_call(fn, warmup: int = 3, min_reps: int = 5, max_reps: int = 200, budget: float = 0.3):
    """Per-call wall times; the garbage collector is paused while timing, as ``timeit`` does."""
    for _ in range(warmup):
        fn()
    samples = []
    spent = 0.0
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        while len(samples) < max_reps and (len(samples) < min_reps or spent < budget):
            t0 = time.perf_counter()
            fn()
            dt = time.perf_counter() - t0
            samples.append(dt)
            spent += dt
    finally:
        if was_enabled:
            gc.enable()
    return samples


def time_interleaved(calls: dict, warmup: int = 3, min_reps: int = 5, max_reps: int = 200,
                     budget: float = 0.3) -> dict:
    """Like :func:`time_call` for several callables, taken round-robin.

    Interleaving spreads slow spells of a shared machine over every entry
    instead of letting them land on whichever one happened to be running.
    An entry leaves the rotation once it has ``min_reps`` samples and has
    used ``budget`` seconds, or reaches ``max_reps``.
    """
    for fn in calls.values():
        for _ in range(warmup):
            fn()
    samples = {k: [] for k in calls}
    spent = dict.fromkeys(calls, 0.0)
    active = list(calls)
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        while active:
            for k in active:
                t0 = time.perf_counter()
                calls[k]()
                dt = time.perf_counter() - t0
                samples[k].append(dt)
                spent[k] += dt
            active = [k for k in active if len(samples[k]) < max_reps
                      and (len(samples[k]) < min_reps or spent[k] < budget)]
    finally:
        if was_enabled:
            gc.enable()
    return samples


def small_model(seed: int = 0, n_items: int = 300) -> ForecastModel:
    """An HWK(6h,1d,4d) model with default tree settings, for timing only."""
    data = simulate_batch(Heterogeneity(), n_items, seed)
    schema = FeatureSchema(n_static=data[0].static_attrs.size)
    ts = build_training_set(data, (6 * HOUR, DAY, 4 * DAY), schema, SamplingPolicy(seed=seed))
    return fit(ts, (6 * HOUR, DAY, 4 * DAY), "geometric", seed=seed)


@dataclass
class CostTable:
    rows: list = field(default_factory=list)
    normalizer: float = 1.0

    def times(self, model: str):
        r = [x for x in self.rows if x["model"] == model]
        return np.array([x["size"] for x in r], float), np.array([x["mean_ms"] for x in r], float)

    def loglog_slope(self, model: str) -> float:
        n, t = self.times(model)
        return float(np.polyfit(np.log(n), np.log(t), 1)[0])

    def max_min_ratio(self, model: str) -> float:
        _, t = self.times(model)
        return float(t.max() / t.min())

    def at(self, model: str, size: int) -> float:
        for x in self.rows:
            if x["model"] == model and x["size"] == size:
                return x["mean_ms"]
        raise KeyError((model, size))

    def table(self) -> str:
        lines = [f"{'model':<8}{'size':>10}{'norm_size':>12}{'mean_ms':>12}{'median_ms':>12}{'reps':>6}"]
        for x in self.rows:
            lines.append(f"{x['model']:<8}{x['size']:>10d}{x['normalized_size']:>12.4g}"
                         f"{x['mean_ms']:>12.4f}{x['median_ms']:>12.4f}{x['reps']:>6d}")
        return "\n".join(lines)


def bench_prediction_cost(models=("hwk", "seismic", "rpp"), sizes=(100, 1000, 10_000, 100_000, 1_000_000),
                          forecast_model: ForecastModel | None = None, seismic_state=None,
                          rpp_max_size: int = 100_000, normalizer: float = 1.0, seed: int = 0,
                          warmup: int = 3) -> CostTable:
    """Wall time of one prediction per model and observed size.

    HWK is timed from an already-maintained item state (features plus the
    regressors); SEISMIC from the raw event list; RPP includes the per-item
    maximum-likelihood fit, which it needs before any prediction.
    """
    sizes = [int(s) for s in sizes]
    if "hwk" in models and forecast_model is None:
        forecast_model = small_model(seed)
    st = seismic_state or bl.SeismicState()
    n_static = forecast_model.schema.n_static if forecast_model is not None else 0
    table = CostTable(normalizer=normalizer)
    cascades = {n: bench_cascade(n, n_static, seed) for n in sizes}
    # model-major order keeps one model's work (e.g. RPP's optimizer) from
    # disturbing another model's timings
    for name in models:
        calls = {}
        for n in sizes:
            c = cascades[n]
            s = float(c.times[-1])
            if name == "hwk":
                state = ItemState.from_cascade(forecast_model.schema, c)

                def call(state=state, s=s, n=n):
                    x = state.features(s)
                    return forecast_model.predict(x, n, DAY)
            elif name == "seismic":
                def call(c=c, s=s):
                    p = bl.seismic_estimate_p(c, s, st)
                    return bl.seismic_predict(c, s, p, state=st)
            elif name == "rpp":
                if n > rpp_max_size:
                    continue

                def call(c=c, s=s, n=n):
                    params, _ = bl.rpp_fit(c, s)
                    return bl.rpp_predict(params, n, s, s + DAY)
            else:
                raise ValueError(f"unknown model {name!r}")
            calls[n] = call
        with pinned_cpu():
            if name == "rpp":
                timed = {n: time_call(f, warmup=min(warmup, 1), min_reps=1, max_reps=3, budget=1.0)
                         for n, f in calls.items()}
            else:
                timed = time_interleaved(calls, warmup=warmup)
        for n, samples in timed.items():
            table.rows.append({
                "model": name,
                "size": n,
                "normalized_size": n / normalizer,
                "mean_ms": 1e3 * statistics.fmean(samples),
                "median_ms": 1e3 * statistics.median(samples),
                "reps": len(samples),
            })
    return table
