import gzip
import json
import tracemalloc

import numpy as np
import pytest

from hawkes_horizon.features import DAY, HOUR, FeatureSchema
from hawkes_horizon.forecaster import SamplingPolicy, build_training_set, fit
from hawkes_horizon.hawkes_core import INF, Cascade
from hawkes_horizon.io import (
    DatasetFormatError,
    SchemaVersionError,
    experiment_from_config,
    iter_dataset,
    load_config,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from hawkes_horizon import baselines as bl
from hawkes_horizon.simulation import Heterogeneity, simulate_batch


@pytest.fixture(scope="module")
def data():
    return simulate_batch(Heterogeneity(max_events=5000), 30, seed=1)


@pytest.mark.parametrize("name", ["d.ndjson", "d.ndjson.gz"])
def test_roundtrip_byte_identical(data, tmp_path, name):
    a, b = tmp_path / ("a" + name), tmp_path / ("b" + name)
    save_dataset(data, a)
    loaded = load_dataset(a)
    save_dataset(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    for x, y in zip(data, loaded):
        assert x.item_id == y.item_id and np.array_equal(x.times, y.times) and np.array_equal(x.marks, y.marks)
        assert np.array_equal(x.static_attrs, y.static_attrs) and x.observed_until == y.observed_until


def test_gzip_really_compressed(data, tmp_path):
    p = tmp_path / "d.gz"
    save_dataset(data[:2], p)
    assert gzip.decompress(p.read_bytes()).startswith(b'{"format":"cascades","version":1}')


def test_inf_observation_window(tmp_path):
    p = tmp_path / "x.ndjson"
    save_dataset([Cascade("a", [1.0], observed_until=INF)], p)
    assert json.loads(p.read_text().splitlines()[1])["observed_until"] is None
    assert load_dataset(p)[0].observed_until == INF


def test_empty_file(tmp_path):
    p = tmp_path / "e.ndjson"
    p.write_text("")
    assert load_dataset(p) == []


def test_version_error(tmp_path):
    p = tmp_path / "v.ndjson"
    p.write_text('{"format":"cascades","version":7}\n')
    with pytest.raises(SchemaVersionError, match="7.*1"):
        load_dataset(p)


def test_line_numbers(tmp_path):
    p = tmp_path / "b.ndjson"
    good = '{"item_id":"a","events":[[1.0,1.0]]}'
    p.write_text('{"format":"cascades","version":1}\n' + good + "\n" + '{"item_id": "b", "events": [1.0]}\n')
    with pytest.raises(DatasetFormatError, match="line 3"):
        load_dataset(p)
    p.write_text('{"format":"cascades","version":1}\n' + good + "\nnot json\n")
    with pytest.raises(DatasetFormatError, match="line 3"):
        load_dataset(p)


@pytest.mark.slow
def test_streaming_memory(tmp_path):
    p = tmp_path / "big.ndjson"
    rec = {"item_id": "x", "created_at": 0.0, "static_attrs": [0.0, 1.0],
           "events": [[float(i), 1.0] for i in range(20)], "truncated": False, "observed_until": None}
    line = json.dumps(rec, separators=(",", ":"))
    with open(p, "w") as fh:
        fh.write('{"format":"cascades","version":1}\n')
        for _ in range(100_000):
            fh.write(line + "\n")
    tracemalloc.start()
    n = 0
    for c in iter_dataset(p):
        n += 1
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert n == 100_000
    assert peak < 1_000_000     # far below the ~30 MB a list of records would take


def test_models_roundtrip(data, tmp_path):
    schema = FeatureSchema(n_static=5)
    ts = build_training_set(data, (6 * HOUR, DAY, 4 * DAY), schema, SamplingPolicy(seed=1))
    hyper = {"n_trees": 5}
    models = [
        fit(ts, (6 * HOUR, 4 * DAY), "arithmetic", hyper),
        bl.train_pb(ts, (DAY,), hyper),
        bl.train_hf(ts, (6 * HOUR, 4 * DAY), hyper),
    ]
    for i, m in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(m, path)
        m2 = load_model(path)
        assert m2.predict(ts.X, ts.n_s, DAY).tobytes() == m.predict(ts.X, ts.n_s, DAY).tobytes()


def test_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('n_items = 50\nhorizons = ["1h", "1d", "inf"]\n[policy]\nmax_age = "2d"\n'
                 '[heterogeneity]\nsize_median = 80.0\n[gbrt]\nn_trees = 7\n')
    cfg = experiment_from_config(load_config(p))
    assert cfg.n_items == 50 and cfg.horizons == (HOUR, DAY, INF)
    assert cfg.policy.max_age == 2 * DAY and cfg.heterogeneity.size_median == 80.0
    assert cfg.gbrt == {"n_trees": 7}
    p.write_text("bogus_key = 1\n")
    with pytest.raises(ValueError, match="bogus_key"):
        experiment_from_config(load_config(p))
