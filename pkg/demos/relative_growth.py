"""Flag items expected to at least double, with and without the confidence margin.

Run: python demos/relative_growth.py
"""

from hawkes_horizon.forecaster import relative_growth_decision
from hawkes_horizon.hawkes_core import HawkesExpParams, intensity_at
from hawkes_horizon.simulation import SimConfig, make_rng, simulate

stats = {"expected": [0, 0], "confident": [0, 0]}
rng = make_rng(1)
for i in range(2000):
    rho1 = rng.uniform(0.2, 0.7)
    p = HawkesExpParams(1.0 / (1 - rho1), rho1, 2 * rho1**2, rng.uniform(20, 400))
    c = simulate(SimConfig(p, "exponential", "exponential"), rng=make_rng(1, i))
    s = rng.uniform(0.05, 1.0) / p.alpha
    n_s = c.count_through(s)
    if n_s < 1:
        continue
    lam = intensity_at(c, p, s)
    for mode in stats:
        if relative_growth_decision(lam, n_s, p.alpha, p.Sigma2, c=2.0, eps_conf=0.2, mode=mode):
            stats[mode][0] += 1
            stats[mode][1] += len(c) > 2 * n_s

for mode, (fired, ok) in stats.items():
    print(f"{mode:>9}: fired on {fired} items, {ok / max(fired, 1):.1%} actually doubled")
