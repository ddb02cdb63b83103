"""Evaluation grid: every model at every horizon on several test splits."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from .estimators import default_window
from .features import DAY, HOUR, FeatureSchema
from .forecaster import (
    ForecastModel,
    SamplingPolicy,
    TrainingSet,
    UnsupportedHorizon,
    build_training_set,
    count_label,
    default_regressor,
    format_duration,
)
from .hawkes_core import INF, Cascade, DomainError
from .metrics import mape_detail, rank_correlation, rmse
from .simulation import Heterogeneity, make_rng, simulate_batch

DEFAULT_HORIZONS = (HOUR, 3 * HOUR, 6 * HOUR, 12 * HOUR, DAY, 2 * DAY, 4 * DAY, 7 * DAY, INF)
DENSE_HF = (HOUR, 3 * HOUR, 6 * HOUR, 12 * HOUR, DAY, 2 * DAY, 4 * DAY, 7 * DAY)
SPARSE_HF = (HOUR, 6 * HOUR, DAY, 4 * DAY)


@dataclass
class ExperimentConfig:
    n_items: int = 5000
    seed: int = 0
    test_fraction: float = 0.2
    heterogeneity: Heterogeneity = field(default_factory=Heterogeneity)
    policy: SamplingPolicy = field(default_factory=SamplingPolicy)
    horizons: tuple = DEFAULT_HORIZONS
    models: tuple = ("hwk", "pb", "hf", "rpp", "seismic")
    reference_sets: tuple = ((DAY,), (6 * HOUR, 4 * DAY), (6 * HOUR, DAY, 4 * DAY))
    aggregation: str = "geometric"
    hf_dense: tuple = DENSE_HF
    hf_sparse: tuple = SPARSE_HF
    alpha_estimator: str = "mean"
    target: str = "increment"          # or "total"
    popularity_threshold: float = 1000.0
    early_late_split: float = DAY
    rpp_max_examples: int = 200
    seismic: dict = field(default_factory=dict)
    gbrt: dict = field(default_factory=dict)
    threads: int = 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["horizons"] = [format_duration(h) for h in self.horizons]
        d["reference_sets"] = [[format_duration(h) for h in r] for r in self.reference_sets]
        d["hf_dense"] = [format_duration(h) for h in self.hf_dense]
        d["hf_sparse"] = [format_duration(h) for h in self.hf_sparse]
        return d

    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    cells: list
    config: dict
    seed: int
    dataset_hash: str
    model_hashes: dict
    info: dict
    timing: dict = field(default_factory=dict)

    def cell(self, model: str, horizon: float, split: str = "overall") -> dict:
        key = format_duration(horizon)
        for c in self.cells:
            if c["model"] == model and c["horizon"] == key and c["split"] == split:
                return c
        raise KeyError((model, key, split))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, default=_json_default)

    def table(self, split: str = "overall", metric: str = "mape") -> str:
        """Columnar text: one row per model, one column per horizon."""
        horizons = list(dict.fromkeys(c["horizon"] for c in self.cells))
        models = list(dict.fromkeys(c["model"] for c in self.cells))
        width = max([len(m) for m in models] + [5])
        lines = [f"{metric} ({split})", " " * width + "".join(f"{h:>9}" for h in horizons)]
        for m in models:
            row = []
            for h in horizons:
                vals = [c for c in self.cells if c["model"] == m and c["horizon"] == h and c["split"] == split]
                v = vals[0][metric] if vals and vals[0]["supported"] else None
                row.append(f"{'-':>9}" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:9.3f}")
            lines.append(f"{m:<{width}}" + "".join(row))
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def dataset_hash(dataset) -> str:
    h = hashlib.sha256()
    for c in dataset:
        h.update(c.item_id.encode())
        h.update(np.ascontiguousarray(c.times, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(c.marks, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(c.static_attrs, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def model_hash(obj) -> str:
    payload = obj.to_dict() if hasattr(obj, "to_dict") else repr(obj)
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=_json_default).encode()).hexdigest()[:16]


def split_items(n_items: int, test_fraction: float, seed: int):
    perm = make_rng(seed, 4).permutation(n_items)
    n_test = max(1, int(round(test_fraction * n_items)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split_masks(ts: TrainingSet, cfg: ExperimentConfig) -> dict:
    low = ts.final_size < cfg.popularity_threshold
    early = ts.s < cfg.early_late_split
    return {
        "overall": np.ones(len(ts), dtype=bool),
        "low": low,
        "high": ~low,
        "early": early,
        "late": ~early,
    }


def _score(pred, truth, n_s, target):
    if target == "total":
        pred, truth = pred + n_s, truth + n_s
    m = mape_detail(pred, truth)
    tau = rank_correlation(pred, truth) if pred.size >= 2 else math.nan
    return {
        "mape": m.value,
        "tau": tau,
        "rmse": rmse(pred, truth) if pred.size else math.nan,
        "n": int(pred.size),
        "n_excluded": m.n_excluded,
    }


def run_experiment(config: ExperimentConfig, dataset: list[Cascade] | None = None,
                   extra_models: dict | None = None) -> EvalReport:
    """Simulate (or take) a dataset, train the roster, and score every cell.

    Predictions are increments ``N(s + delta) - N(s)`` (``target="increment"``)
    or totals ``N(s + delta)`` (``target="total"``).
    """
    cfg = config
    t_start = time.perf_counter()
    if dataset is None:
        dataset = simulate_batch(cfg.heterogeneity, cfg.n_items, cfg.seed)
    train_idx, test_idx = split_items(len(dataset), cfg.test_fraction, cfg.seed)
    train_c = [dataset[i] for i in train_idx]
    test_c = [dataset[i] for i in test_idx]
    n_static = dataset[0].static_attrs.size if dataset else 0
    schema = FeatureSchema(n_static=n_static, base_window=default_window(train_c))
    horizons = tuple(float(h) for h in cfg.horizons)
    needed = sorted(set(horizons) | {h for r in cfg.reference_sets for h in r}
                    | set(cfg.hf_dense) | set(cfg.hf_sparse), key=lambda h: (math.isinf(h), h))
    train = build_training_set(train_c, needed, schema, cfg.policy, cfg.alpha_estimator)
    test_policy = dataclasses.replace(cfg.policy, seed=cfg.policy.seed + 1)
    test = build_training_set(test_c, needed, schema, test_policy, cfg.alpha_estimator)
    if len(train) == 0 or len(test) == 0:
        raise DomainError("no usable training or test examples")
    info = {"n_train_rows": len(train), "n_test_rows": len(test), "dropped_train": train.dropped,
            "dropped_test": test.dropped, "base_window": schema.base_window}
    timing: dict = {}

    def factory():
        return default_regressor(cfg.seed, **cfg.gbrt)

    count_regs: dict = {}

    def count_reg(h):
        if h not in count_regs:
            count_regs[h] = factory().fit(train.X, count_label(train.column(h)))
        return count_regs[h]

    models: dict = {}
    t0 = time.perf_counter()
    pool_h = set()
    if "pb" in cfg.models:
        pool_h |= set(horizons)
    if "hwk" in cfg.models:
        pool_h |= {h for r in cfg.reference_sets for h in r}
    pool_h = sorted(pool_h, key=lambda h: (math.isinf(h), h))
    with ThreadPoolExecutor(max(1, cfg.threads)) as ex:
        fitted = list(ex.map(lambda h: factory().fit(train.X, count_label(train.column(h))), pool_h))
    count_regs.update(zip(pool_h, fitted))
    timing["fit_counts_s"] = time.perf_counter() - t0
    if "hwk" in cfg.models:
        t0 = time.perf_counter()
        alpha_reg = factory().fit(train.X, np.log(train.alpha_label))
        timing["fit_alpha_s"] = time.perf_counter() - t0
        for ref in cfg.reference_sets:
            ref = tuple(float(h) for h in ref)
            agg = "single" if len(ref) == 1 else cfg.aggregation
            m = ForecastModel(ref, [count_reg(h) for h in ref], alpha_reg, schema, agg)
            models[m.name] = m
    if "pb" in cfg.models:
        models["PB"] = bl.PointModels({h: count_reg(h) for h in horizons}, schema)
    if "hf" in cfg.models:
        for name, hs in (("HF-dense", cfg.hf_dense), ("HF-sparse", cfg.hf_sparse)):
            t0 = time.perf_counter()
            models[name] = bl.train_hf(train, hs, regressor_factory=factory, name=name)
            timing[f"fit_{name}_s"] = time.perf_counter() - t0
    models.update(extra_models or {})

    masks = split_masks(test, cfg)
    cells = []

    def add_cells(name, h, pred, rows, supported=True):
        truth = test.column(h)[rows]
        n_s = test.n_s[rows]
        for split, mask in masks.items():
            sel = mask[rows]
            if supported and sel.sum() > 0:
                sc = _score(pred[sel], truth[sel], n_s[sel], cfg.target)
            else:
                sc = {"mape": math.nan, "tau": math.nan, "rmse": math.nan, "n": 0, "n_excluded": 0}
            cells.append({"model": name, "horizon": format_duration(h), "split": split,
                          "supported": bool(supported), **sc})

    all_rows = np.arange(len(test))
    for name, m in models.items():
        for h in horizons:
            try:
                pred = np.asarray(m.predict(test.X, test.n_s, h)) - test.n_s
                add_cells(name, h, pred, all_rows)
            except UnsupportedHorizon:
                add_cells(name, h, None, all_rows, supported=False)

    if "seismic" in cfg.models:
        st = bl.SeismicState(**cfg.seismic)
        t0 = time.perf_counter()
        pred = np.empty(len(test))
        capped = 0
        for r in range(len(test)):
            c = test_c[test.item[r]]
            s = float(test.s[r])
            try:
                p_hat = bl.seismic_estimate_p(c, s, st)
                out = bl.seismic_predict(c, s, p_hat, state=st, detail=True)
                pred[r] = out.value - test.n_s[r]
                capped += out.capped
            except DomainError:
                pred[r] = 0.0
        timing["seismic_predict_s"] = time.perf_counter() - t0
        info["seismic_capped"] = int(capped)
        for h in horizons:
            add_cells("SEISMIC", h, pred, all_rows, supported=math.isinf(h))

    if "rpp" in cfg.models:
        rng = make_rng(cfg.seed, 5)
        eligible = np.flatnonzero(test.n_s >= 2)
        rows = np.sort(rng.permutation(eligible)[: cfg.rpp_max_examples])

        def fit_row(r):
            c = test_c[test.item[r]]
            return bl.rpp_fit(c, float(test.s[r]))

        t0 = time.perf_counter()
        with ThreadPoolExecutor(max(1, cfg.threads)) as ex:
            fits = list(ex.map(fit_row, rows))
        timing["rpp_fit_s"] = time.perf_counter() - t0
        info["rpp_rows"] = int(rows.size)
        info["rpp_unconverged"] = int(sum(not f[1].converged for f in fits))
        for h in horizons:
            pred = np.array([
                bl.rpp_predict(p, test.n_s[r], test.s[r], test.s[r] + h) - test.n_s[r]
                for r, (p, _) in zip(rows, fits)
            ])
            add_cells("RPP", h, pred, rows)

    timing["total_s"] = time.perf_counter() - t_start
    hashes = {name: _composite_hash(m) for name, m in models.items()}
    return EvalReport(cells, cfg.to_dict(), cfg.seed, dataset_hash(dataset), hashes, info, timing)


def _composite_hash(m) -> str:
    parts = []
    if isinstance(m, ForecastModel):
        parts = [r.to_dict() for r in m.count_models] + [m.alpha_model.to_dict(), m.aggregation]
    elif isinstance(m, bl.PointModels):
        parts = [[h, r.to_dict()] for h, r in sorted(m.regressors.items())]
    elif isinstance(m, bl.HorizonFeatureModel):
        parts = [list(m.horizons), m.regressor.to_dict()]
    else:
        return "unhashed"
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=_json_default).encode()).hexdigest()[:16]


def write_report(report: EvalReport, out_dir) -> dict:
    """Write report.json, report.txt and curves.csv into ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "text": out / "report.txt", "curves": out / "curves.csv"}
    paths["json"].write_text(report.to_json() + "\n")
    splits = list(dict.fromkeys(c["split"] for c in report.cells))
    text = "\n\n".join(report.table(s, m) for m in ("mape", "tau") for s in splits)
    paths["text"].write_text(text + "\n")
    lines = ["model,split,horizon,supported,mape,tau,rmse,n,n_excluded"]
    for c in report.cells:
        lines.append(",".join(str(c[k]) for k in ("model", "split", "horizon", "supported",
                                                   "mape", "tau", "rmse", "n", "n_excluded")))
    paths["curves"].write_text("\n".join(lines) + "\n")
    return paths
