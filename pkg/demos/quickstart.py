"""Train HWK(6h,1d,4d) on a small synthetic batch and forecast one item at many horizons.

Run: python demos/quickstart.py
"""

import numpy as np

from hawkes_horizon import DAY, HOUR, FeatureSchema, ItemState, build_training_set, fit, simulate_batch
from hawkes_horizon.estimators import default_window
from hawkes_horizon.forecaster import SamplingPolicy, format_duration
from hawkes_horizon.simulation import Heterogeneity

data = simulate_batch(Heterogeneity(max_events=50_000), 400, seed=7)
train, test = data[:350], data[350:]
schema = FeatureSchema(n_static=train[0].static_attrs.size, base_window=default_window(train))
refs = (6 * HOUR, DAY, 4 * DAY)
ts = build_training_set(train, refs, schema, SamplingPolicy(seed=7))
model = fit(ts, refs, "geometric", hyperparams={"n_trees": 100}, seed=7)
print(f"{model.name}: {len(ts)} training rows, {ts.dropped} dropped")

# stream one held-out item up to s = 8h, then ask for several horizons
item = max(test, key=len)
s = 8 * HOUR
state = ItemState.from_cascade(schema, item, until=s)
x = state.features(s)
print(f"\nitem {item.item_id}: N(s={format_duration(s)}) = {state.n}, final observed = {len(item)}")
print(f"{'horizon':>8} {'predicted':>10} {'actual':>8}")
for d in (HOUR, 6 * HOUR, DAY, 3 * DAY, 7 * DAY, float("inf")):
    pred = model.predict(x, state.n, d)
    actual = len(item) if np.isinf(d) else item.count_through(s + d)
    print(f"{format_duration(d):>8} {pred:10.1f} {actual:8d}")
