"""Command-line entry point: simulate, train, predict, evaluate, bench."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import bench_prediction_cost
from .estimators import default_window
from .experiment import ExperimentConfig, _json_default, run_experiment, write_report
from .features import FeatureSchema, extract_features
from .forecaster import SamplingPolicy, build_training_set, fit, format_duration, parse_duration
from .io import (
    experiment_from_config,
    heterogeneity_from_config,
    load_config,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .simulation import Heterogeneity, simulate_batch


def _durations(text: str) -> tuple[float, ...]:
    return tuple(parse_duration(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip().lower() for x in text.split(",") if x.strip())


def cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    het = heterogeneity_from_config(cfg) if cfg else Heterogeneity()
    n_items = args.n_items if args.n_items is not None else int(cfg.get("n_items", 5000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    save_dataset(simulate_batch(het, n_items, seed), args.out)
    print(f"wrote {n_items} cascades to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    data = load_dataset(args.data)
    if not data:
        raise ValueError("dataset is empty")
    horizons = _durations(args.horizons)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    policy = SamplingPolicy(**{**{k: (parse_duration(v) if k.endswith("_age") else v)
                                  for k, v in cfg.get("policy", {}).items()}, "seed": seed})
    window = parse_duration(args.window) if args.window else default_window(data)
    schema = FeatureSchema(n_static=data[0].static_attrs.size, base_window=window)
    ts = build_training_set(data, horizons, schema, policy, args.alpha_estimator)
    aggregation = "single" if len(horizons) == 1 else args.aggregation
    model = fit(ts, horizons, aggregation, hyperparams=cfg.get("gbrt", {}), seed=seed)
    save_model(model, args.model_out)
    print(f"trained {model.name} on {len(ts)} examples ({ts.dropped} dropped); saved to {args.model_out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    s = parse_duration(args.at)
    delta = parse_duration(args.horizon)
    rows = []
    for c in data:
        x = extract_features(c, s, model.schema)
        n_s = c.count_through(s)
        rows.append({"item_id": c.item_id, "at": s, "horizon": format_duration(delta),
                     "n_s": n_s, "prediction": float(model.predict(x, n_s, delta))})
    if args.format == "records":
        for r in rows:
            print(json.dumps(r))
    else:
        print(f"{'item_id':<16}{'n_s':>10}{'prediction':>16}")
        for r in rows:
            print(f"{r['item_id']:<16}{r['n_s']:>10d}{r['prediction']:>16.6g}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = experiment_from_config(load_config(args.config)) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
        updates["policy"] = dataclasses.replace(cfg.policy, seed=args.seed)
    if args.models:
        updates["models"] = _names(args.models)
    if args.horizons:
        updates["horizons"] = _durations(args.horizons)
    if args.threads:
        updates["threads"] = args.threads
    cfg = dataclasses.replace(cfg, **updates)
    data = load_dataset(args.data) if args.data else None
    if data is not None:
        cfg = dataclasses.replace(cfg, n_items=len(data))
    report = run_experiment(cfg, data)
    paths = write_report(report, args.report)
    print(report.table())
    print(f"report written to {paths['json'].parent}")
    return 0


def cmd_bench(args) -> int:
    sizes = [int(float(x)) for x in args.sizes.split(",")]
    normalizer = 1.0
    if args.data:
        normalizer = float(np.mean([len(c) for c in load_dataset(args.data)]))
    model = load_model(args.model) if args.model else None
    seed = args.seed if args.seed is not None else 0
    table = bench_prediction_cost(_names(args.models), sizes, forecast_model=model,
                                  normalizer=normalizer, seed=seed)
    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    names = {r["model"] for r in table.rows}
    if "hwk" in names:
        summary["hwk_max_min_ratio"] = table.max_min_ratio("hwk")
    if "seismic" in names:
        summary["seismic_loglog_slope"] = table.loglog_slope("seismic")
    (out / "bench.json").write_text(json.dumps({"rows": table.rows, "summary": summary,
                                                "normalizer": normalizer}, indent=1,
                                               default=_json_default) + "\n")
    (out / "bench.txt").write_text(table.table() + "\n")
    print(table.table())
    for k, v in summary.items():
        print(f"{k}: {v:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hawkes-horizon", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic cascade dataset")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-items", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="fit a horizon-free forecaster")
    s.add_argument("--data", required=True)
    s.add_argument("--model-out", required=True)
    s.add_argument("--horizons", default="6h,1d,4d")
    s.add_argument("--aggregation", choices=("arithmetic", "geometric"), default="geometric")
    s.add_argument("--alpha-estimator", choices=("mean", "quantile"), default="mean")
    s.add_argument("--window", help="base velocity window (default: 1%% of the median duration)")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="forecast N(s + delta) for every item")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--at", required=True)
    s.add_argument("--horizon", required=True)
    s.add_argument("--format", choices=("table", "records"), default="table")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="score models across horizons and splits")
    s.add_argument("--data")
    s.add_argument("--config")
    s.add_argument("--models")
    s.add_argument("--horizons")
    s.add_argument("--report", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("bench", help="time one prediction per model and cascade size")
    s.add_argument("--models", default="hwk,seismic,rpp")
    s.add_argument("--sizes", default="1e2,1e3,1e4,1e5,1e6")
    s.add_argument("--model")
    s.add_argument("--data", help="dataset whose mean size normalizes the size axis")
    s.add_argument("--report", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
        sys.stdout.flush()
        return rc
    except BrokenPipeError:  # e.g. piped into head
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except Exception as e:  # one machine-parsable line, no traceback
        msg = " ".join(str(e).split())
        print(f"error {type(e).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
