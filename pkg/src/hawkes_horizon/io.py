"""Cascade dataset files, model files and TOML run configuration.

Dataset files are newline-delimited JSON: a header line
``{"format":"cascades","version":1}`` followed by one record per item.
Names ending in ``.gz`` are gzip-compressed. Floats are written with
``repr`` so a load/save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import dataclasses
import gzip
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import baselines as bl
from .experiment import ExperimentConfig
from .features import FeatureSchema
from .forecaster import ForecastModel, SamplingPolicy, parse_duration
from .gbrt import TreeEnsembleRegressor
from .hawkes_core import INF, Cascade
from .simulation import Heterogeneity

DATASET_FORMAT = "cascades"
DATASET_VERSION = 1
MODEL_FORMAT = "hawkes_horizon_model"
MODEL_VERSION = 1


class DatasetFormatError(ValueError):
    pass


class SchemaVersionError(ValueError):
    pass


def _open(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        if "w" in mode:
            raw = open(path, "wb")
            gz = gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0)
            return _ClosingText(gz, raw)
        return _io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="\n")
    return open(path, mode + "t", encoding="utf-8", newline="\n")


class _ClosingText(_io.TextIOWrapper):
    """Text wrapper over a GzipFile that also closes the underlying file."""

    def __init__(self, gz, raw):
        super().__init__(gz, encoding="utf-8", newline="\n")
        self._raw = raw

    def close(self):
        super().close()
        self._raw.close()


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False, ensure_ascii=False)


def record_to_dict(c: Cascade) -> dict:
    return {
        "item_id": c.item_id,
        "created_at": float(c.created_at),
        "static_attrs": [float(x) for x in c.static_attrs],
        "events": [[float(t), float(m)] for t, m in zip(c.times, c.marks)],
        "truncated": bool(c.truncated),
        "observed_until": None if math.isinf(c.observed_until) else float(c.observed_until),
    }


def record_from_dict(d: dict) -> Cascade:
    missing = {"item_id", "events"} - set(d)
    if missing:
        raise DatasetFormatError(f"missing fields {sorted(missing)}")
    ev = d["events"]
    if ev and any(not isinstance(e, list) or len(e) != 2 for e in ev):
        raise DatasetFormatError("events must be [t_offset, mark] pairs")
    times = np.array([e[0] for e in ev], dtype=float)
    marks = np.array([e[1] for e in ev], dtype=float)
    ou = d.get("observed_until")
    return Cascade(
        str(d["item_id"]),
        times,
        marks,
        created_at=float(d.get("created_at", 0.0)),
        static_attrs=np.array(d.get("static_attrs", []), dtype=float),
        truncated=bool(d.get("truncated", False)),
        observed_until=INF if ou is None else float(ou),
    )


def iter_dataset(path) -> Iterator[Cascade]:
    """Stream records one at a time; memory is bounded by the largest record."""
    with _open(path, "r") as fh:
        first = fh.readline()
        if not first.strip():
            return
        try:
            header = json.loads(first)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"line 1: bad header ({e.msg})") from None
        if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
            raise DatasetFormatError("line 1: not a cascades file")
        if header.get("version") != DATASET_VERSION:
            raise SchemaVersionError(
                f"file has schema version {header.get('version')}, this reader supports version {DATASET_VERSION}"
            )
        width = None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                c = record_from_dict(json.loads(line))
            except (json.JSONDecodeError, DatasetFormatError, ValueError, TypeError, KeyError) as e:
                raise DatasetFormatError(f"line {lineno}: {e}") from None
            if width is None:
                width = c.static_attrs.size
            elif c.static_attrs.size != width:
                raise DatasetFormatError(
                    f"line {lineno}: {c.static_attrs.size} static attributes, expected {width}")
            yield c


def load_dataset(path) -> list[Cascade]:
    return list(iter_dataset(path))


def save_dataset(dataset: Iterable[Cascade], path) -> None:
    with _open(path, "w") as fh:
        fh.write(_dumps({"format": DATASET_FORMAT, "version": DATASET_VERSION}) + "\n")
        for c in dataset:
            fh.write(_dumps(record_to_dict(c)) + "\n")


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def _reg_from_dict(d):
    if d.get("kind") != "tree_ensemble":
        raise ValueError(f"unknown regressor kind {d.get('kind')!r}")
    return TreeEnsembleRegressor.from_dict(d)


def _horizon_out(h: float):
    return None if math.isinf(h) else h


def _horizon_in(h) -> float:
    return INF if h is None else float(h)


def model_to_dict(model) -> dict:
    if isinstance(model, ForecastModel):
        body = {
            "kind": "hwk",
            "horizons": list(model.horizons),
            "aggregation": model.aggregation,
            "alpha_bounds": list(model.alpha_bounds),
            "log_offset": model.log_offset,
            "flags": model.flags,
            "count_models": [m.to_dict() for m in model.count_models],
            "alpha_model": model.alpha_model.to_dict(),
        }
    elif isinstance(model, bl.PointModels):
        body = {
            "kind": "pb",
            "log_offset": model.log_offset,
            "horizons": [_horizon_out(h) for h in model.horizons],
            "models": [model.regressors[h].to_dict() for h in model.horizons],
        }
    elif isinstance(model, bl.HorizonFeatureModel):
        body = {
            "kind": "hf",
            "name": model.name,
            "log_offset": model.log_offset,
            "horizons": [_horizon_out(h) for h in model.horizons],
            "model": model.regressor.to_dict(),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "schema": model.schema.to_dict(), **body}


def model_from_dict(d: dict):
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if d.get("version") != MODEL_VERSION:
        raise SchemaVersionError(
            f"model file has version {d.get('version')}, this reader supports version {MODEL_VERSION}")
    schema = FeatureSchema.from_dict(d["schema"])
    kind = d["kind"]
    if kind == "hwk":
        return ForecastModel(
            tuple(d["horizons"]),
            [_reg_from_dict(m) for m in d["count_models"]],
            _reg_from_dict(d["alpha_model"]),
            schema,
            d["aggregation"],
            tuple(d["alpha_bounds"]),
            float(d["log_offset"]),
            dict(d.get("flags", {})),
        )
    if kind == "pb":
        regs = {_horizon_in(h): _reg_from_dict(m) for h, m in zip(d["horizons"], d["models"])}
        return bl.PointModels(regs, schema, float(d["log_offset"]))
    if kind == "hf":
        return bl.HorizonFeatureModel(_reg_from_dict(d["model"]), [_horizon_in(h) for h in d["horizons"]],
                                      schema, float(d["log_offset"]), d.get("name", "HF"))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), allow_nan=False) + "\n", encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DURATION_KEYS = {"t_max", "min_age", "max_age", "early_late_split", "min_window", "max_window"}
_DURATION_LIST_KEYS = {"inv_alpha_range", "horizons", "hf_dense", "hf_sparse"}


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _durations(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if k in _DURATION_KEYS:
            out[k] = parse_duration(v)
        elif k in _DURATION_LIST_KEYS:
            out[k] = tuple(parse_duration(x) for x in v)
        elif k == "reference_sets":
            out[k] = tuple(tuple(parse_duration(x) for x in r) for r in v)
        elif isinstance(v, list):
            out[k] = tuple(v)
        else:
            out[k] = v
    return out


def _build(cls, d: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown keys in [{where}]: {sorted(unknown)}")
    return cls(**_durations(d))


def heterogeneity_from_config(cfg: dict) -> Heterogeneity:
    return _build(Heterogeneity, cfg.get("heterogeneity", {}), "heterogeneity")


def experiment_from_config(cfg: dict) -> ExperimentConfig:
    """ExperimentConfig from a parsed TOML document.

    Top-level keys map onto :class:`ExperimentConfig` fields; the
    ``[heterogeneity]``, ``[policy]``, ``[gbrt]`` and ``[seismic]`` tables
    configure the nested parts.
    """
    top = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    exp = _build(ExperimentConfig, top, "top level")
    policy = {"seed": exp.seed, **cfg.get("policy", {})}   # follows the run seed unless set
    return dataclasses.replace(
        exp,
        heterogeneity=heterogeneity_from_config(cfg),
        policy=_build(SamplingPolicy, policy, "policy"),
        gbrt=dict(cfg.get("gbrt", {})),
        seismic=_durations(cfg.get("seismic", {})),
    )
