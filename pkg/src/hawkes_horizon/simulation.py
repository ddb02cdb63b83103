"""Exact simulation of self-excited cascades.

Random streams use numpy's Philox counter-based generator. A stream is
identified by an integer key path: ``make_rng(seed, *keys)`` builds
``Generator(Philox(SeedSequence([seed, *keys])))``. Batch generation uses
key paths ``(seed, 0, i)`` for the parameters of item ``i``, ``(seed, 1, i)``
for its events and ``(seed, 2, i)`` for its attribute noise, so every item can be
regenerated in isolation and in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hawkes_core import (
    INF,
    Cascade,
    DomainError,
    ExponentialKernel,
    HawkesExpParams,
    PowerLawKernel,
    PowerLawKernelParams,
)

MARK_LAWS = ("constant", "exponential", "lognormal")
_CHUNK = 4096


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def sample_marks(law: str, m1: float, m2: float | None, size, rng: np.random.Generator):
    """Draw nonnegative mark scales with mean ``m1`` and second moment ``m2``."""
    if m1 == 0:
        return np.zeros(size)
    if law == "constant":
        return np.full(size, float(m1))
    if law == "exponential":
        return rng.exponential(m1, size)
    if law == "lognormal":
        s2 = math.log(m2 / m1**2) if m2 is not None else 0.0
        return rng.lognormal(math.log(m1) - s2 / 2, math.sqrt(s2), size)
    raise ValueError(f"unknown mark law {law!r}")


def law_second_moment(law: str, m1: float, m2: float | None) -> float:
    """Second moment implied by ``law``; checks consistency when ``m2`` is given."""
    implied = {"constant": m1**2, "exponential": 2 * m1**2}.get(law)
    if implied is None:
        if law != "lognormal":
            raise ValueError(f"unknown mark law {law!r}")
        return m1**2 if m2 is None else m2
    if m2 is not None and not math.isclose(m2, implied, rel_tol=1e-9, abs_tol=1e-15):
        raise DomainError(f"{law} marks with mean {m1} have second moment {implied}, not {m2}")
    return implied


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    For the power-law kernel the intensity is
    ``lambda0 * phi(t)/phi(0) + sum_i p * d_i * phi(t - T_i)`` with node
    degrees ``d_i`` drawn from ``mark_law`` with moments
    (``mark_mean``, ``mark_m2``); the cascade stores ``p * d_i`` as marks.
    """

    params: HawkesExpParams | PowerLawKernelParams
    kernel: str = "exponential"
    mark_law: str = "constant"
    t_max: float = INF
    max_events: int = 1_000_000
    seed: int = 0
    lambda0: float | None = None
    mark_mean: float = 1.0
    mark_m2: float | None = None

    def __post_init__(self):
        if self.kernel not in ("exponential", "power_law"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.t_max > 0:
            raise DomainError("t_max must be > 0")
        if self.max_events < 1:
            raise DomainError("max_events must be >= 1")
        if self.mark_law not in MARK_LAWS:
            raise ValueError(f"unknown mark law {self.mark_law!r}")
        if self.kernel == "exponential":
            if not isinstance(self.params, HawkesExpParams):
                raise TypeError("exponential kernel needs HawkesExpParams")
            if self.params.rho1 > 0:
                law_second_moment(self.mark_law, self.params.rho1, self.params.rho2)
        else:
            if not isinstance(self.params, PowerLawKernelParams):
                raise TypeError("power-law kernel needs PowerLawKernelParams")
            law_second_moment(self.mark_law, self.mark_mean, self.mark_m2)
            if not math.isfinite(self.t_max):
                raise DomainError("power-law simulation needs a finite t_max")
            if self.branching_ratio >= 1:
                raise DomainError(f"branching ratio {self.branching_ratio:.3g} >= 1")

    @property
    def initial_intensity(self) -> float:
        if self.kernel == "exponential":
            return self.params.lambda0 if self.lambda0 is None else self.lambda0
        return 0.0 if self.lambda0 is None else self.lambda0

    @property
    def branching_ratio(self) -> float:
        if self.kernel == "exponential":
            return self.params.rho1
        return self.params.p * self.mark_mean * PowerLawKernel(self.params).total()

    def kernel_obj(self):
        if self.kernel == "exponential":
            return ExponentialKernel(self.params.beta)
        return PowerLawKernel(self.params)

    def jump_sizes(self, size, rng):
        """Intensity jumps ``y`` for new events."""
        if self.kernel == "exponential":
            p = self.params
            return p.beta * sample_marks(self.mark_law, p.rho1, p.rho2, size, rng)
        return self.params.p * sample_marks(self.mark_law, self.mark_mean, self.mark_m2, size, rng)


def simulate(config: SimConfig, history: Cascade | None = None, start: float = 0.0,
             rng: np.random.Generator | None = None, item_id: str = "sim") -> Cascade:
    """Draw one cascade on ``[start, t_max]``.

    With ``history`` the events of ``history`` before ``start`` are kept and
    the process is continued from ``start`` conditionally on them.
    """
    rng = make_rng(config.seed) if rng is None else rng
    if history is not None:
        n0 = history.count_before(start)
        t0, y0 = history.times[:n0], history.marks[:n0]
    else:
        t0, y0 = np.zeros(0), np.zeros(0)
    if config.kernel == "exponential":
        times, marks, truncated = _simulate_exp(config, t0, y0, start, rng)
    else:
        times, marks, truncated = _simulate_thinning(config, t0, y0, start, rng)
    return Cascade(item_id, times, marks, truncated=truncated, observed_until=config.t_max)


def _simulate_exp(config, t0, y0, start, rng):
    p = config.params
    beta = p.beta
    lam = config.initial_intensity * math.exp(-beta * start)
    if t0.size:
        lam += float(np.sum(y0 * np.exp(-beta * (start - t0))))
    times = list(t0)
    marks = list(y0)
    t = start
    t_max = config.t_max
    cap = config.max_events
    truncated = False
    while True:
        e_block = rng.standard_exponential(_CHUNK)
        y_block = config.jump_sizes(_CHUNK, rng)
        for k in range(_CHUNK):
            # remaining compensator mass is lam / beta; beyond it the process is extinct
            x = beta * e_block[k] / lam if lam > 0 else INF
            if x >= 1.0:
                return np.array(times), np.array(marks), truncated
            dt = -math.log1p(-x) / beta
            t += dt
            if t > t_max:
                return np.array(times), np.array(marks), truncated
            if len(times) >= cap:
                truncated = True
                return np.array(times), np.array(marks), truncated
            times.append(t)
            marks.append(y_block[k])
            lam = lam * math.exp(-beta * dt) + y_block[k]


def _simulate_thinning(config, t0, y0, start, rng):
    """Ogata thinning. The intensity is nonincreasing between events, so its
    value just after the current instant is a valid constant majorant."""
    kern = config.kernel_obj()
    phi0 = float(kern.value(0.0))
    lam0 = config.initial_intensity
    cap = config.max_events
    buf_t = np.empty(max(64, 2 * t0.size))
    buf_y = np.empty_like(buf_t)
    n = t0.size
    buf_t[:n], buf_y[:n] = t0, y0

    def intensity(t):
        val = lam0 * kern.value(t) / phi0
        if n:
            val += float(np.dot(buf_y[:n], kern.value(t - buf_t[:n])))
        return val

    t = start
    truncated = False
    m = intensity(t)
    while m > 0:
        t_c = t + rng.standard_exponential() / m
        if t_c > config.t_max:
            break
        lam_c = intensity(t_c)
        t = t_c
        if rng.random() * m <= lam_c:
            if n >= cap:
                truncated = True
                break
            if n == buf_t.size:
                buf_t = np.resize(buf_t, 2 * n)
                buf_y = np.resize(buf_y, 2 * n)
            buf_t[n] = t
            buf_y[n] = config.jump_sizes(1, rng)[0]
            n += 1
            m = lam_c + buf_y[n - 1] * phi0
        else:
            m = lam_c
    return buf_t[:n].copy(), buf_y[:n].copy(), truncated


# ---------------------------------------------------------------------------
# Cluster (branching) representation
# ---------------------------------------------------------------------------


def _kernel_offsets(config: SimConfig, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of the normalised kernel density."""
    if config.kernel == "exponential":
        return -np.log1p(-u) / config.params.beta
    pp = config.params
    total = PowerLawKernel(pp).total()
    mass = u * total
    flat = pp.phi0 * pp.tau_cut
    with np.errstate(invalid="ignore", divide="ignore"):
        base = 1.0 - pp.theta * (mass / flat - 1.0)
        tail = pp.tau_cut * base ** (-1.0 / pp.theta)
    return np.where(mass <= flat, mass / pp.phi0, tail)


def simulate_branching(config: SimConfig, rng: np.random.Generator | None = None,
                       item_id: str = "sim") -> tuple[Cascade, np.ndarray]:
    """Draw a cascade generation by generation; returns it with each event's generation.

    Immigrants come from the baseline; an event with jump ``y`` has
    Poisson(``y * int phi``) children placed at kernel-distributed offsets.
    Children past ``t_max`` are dropped. Requires a finite ``t_max`` or an
    integrable kernel.
    """
    rng = make_rng(config.seed) if rng is None else rng
    kern = config.kernel_obj()
    total = kern.total()
    phi0 = float(kern.value(0.0))
    lam0 = config.initial_intensity
    t_max = config.t_max
    base_mass = lam0 * float(kern.primitive(t_max)) / phi0
    n_imm = rng.poisson(base_mass)
    u = rng.random(n_imm) * (float(kern.primitive(t_max)) / total)
    gen_t = [_kernel_offsets(config, u)]
    gen_y = [config.jump_sizes(n_imm, rng)]
    while gen_t[-1].size:
        parents_t, parents_y = gen_t[-1], gen_y[-1]
        k = rng.poisson(parents_y * total)
        child_parent = np.repeat(parents_t, k)
        child_t = child_parent + _kernel_offsets(config, rng.random(child_parent.size))
        child_t = child_t[child_t <= t_max]
        gen_t.append(child_t)
        gen_y.append(config.jump_sizes(child_t.size, rng))
        if sum(g.size for g in gen_t) > config.max_events:
            break
    times = np.concatenate(gen_t)
    marks = np.concatenate(gen_y)
    gens = np.concatenate([np.full(g.size, i + 1) for i, g in enumerate(gen_t)])
    order = np.argsort(times, kind="stable")
    times, marks, gens = times[order], marks[order], gens[order]
    truncated = times.size > config.max_events
    if truncated:
        times, marks, gens = times[: config.max_events], marks[: config.max_events], gens[: config.max_events]
    return Cascade(item_id, times, marks, truncated=truncated, observed_until=t_max), gens


# ---------------------------------------------------------------------------
# Vectorised replicates (Monte-Carlo oracle)
# ---------------------------------------------------------------------------


def simulate_exp_counts(lambda_s: float, params: HawkesExpParams, mark_law: str,
                        horizons, n_reps: int, rng: np.random.Generator) -> np.ndarray:
    """Counts ``N(s + delta) - N(s)`` for ``n_reps`` independent continuations.

    The exponential-kernel process is Markov in ``(lambda, N)``, so a
    continuation depends on the history only through ``lambda_s``. Returns an
    array of shape ``(n_reps, len(horizons))``.
    """
    horizons = np.asarray(horizons, dtype=float)
    h_max = float(horizons.max())
    beta = params.beta
    lam = np.full(n_reps, float(lambda_s))
    t = np.zeros(n_reps)
    counts = np.zeros((n_reps, horizons.size), dtype=np.int64)
    idx = np.arange(n_reps)
    while idx.size:
        e = rng.standard_exponential(idx.size)
        x = beta * e / lam
        alive = x < 1.0
        dt = np.full(idx.size, INF)
        dt[alive] = -np.log1p(-x[alive]) / beta
        t_new = t + dt
        alive &= t_new <= h_max
        idx, lam, t_new, dt = idx[alive], lam[alive], t_new[alive], dt[alive]
        counts[idx] += t_new[:, None] <= horizons[None, :]
        z = sample_marks(mark_law, params.rho1, params.rho2, idx.size, rng)
        lam = lam * np.exp(-beta * dt) + beta * z
        t = t_new
    return counts


@dataclass(frozen=True)
class Heterogeneity:
    """Per-item parameter laws for synthetic benchmark batches.

    ``1/alpha`` is log-uniform on ``inv_alpha_range`` (seconds), ``rho1``
    uniform on ``rho1_range``, and the expected final size ``lambda0/alpha``
    lognormal with the given median and log-sd. Static attributes are
    ``[log beta, logit rho1, log lambda0]`` plus Gaussian noise of sd
    ``attr_noise``, followed by ``n_distractors`` pure-noise columns.
    """

    inv_alpha_range: tuple[float, float] = (2 * 3600.0, 4 * 86400.0)
    rho1_range: tuple[float, float] = (0.2, 0.8)
    size_median: float = 150.0
    size_log_sd: float = 1.0
    mark_law: str = "exponential"
    attr_noise: float = 0.1
    n_distractors: int = 2
    t_max: float = 60 * 86400.0
    max_events: int = 200_000


def sample_item_params(het: Heterogeneity, n_items: int, seed: int) -> list[HawkesExpParams]:
    """Parameters of items ``0 .. n_items-1``; item ``i`` draws from key path ``(seed, 0, i)``."""
    lo, hi = np.log(het.inv_alpha_range)
    m2 = {"constant": 1.0, "exponential": 2.0, "lognormal": 2.0}[het.mark_law]
    out = []
    for i in range(n_items):
        rng = make_rng(seed, 0, i)
        alpha = math.exp(-rng.uniform(lo, hi))
        rho1 = rng.uniform(*het.rho1_range)
        size = het.size_median * math.exp(het.size_log_sd * rng.standard_normal())
        out.append(HawkesExpParams(alpha / (1 - rho1), rho1, m2 * rho1 * rho1, alpha * size))
    return out


def encode_attrs(params: HawkesExpParams) -> np.ndarray:
    """Noise-free static attributes of one item."""
    r = params.rho1
    return np.array([math.log(params.beta), math.log(r / (1 - r)), math.log(params.lambda0)])


def decode_alpha(attrs) -> float:
    """Exact alpha from noise-free attributes (the construction is invertible)."""
    beta = math.exp(attrs[0])
    rho1 = 1.0 / (1.0 + math.exp(-attrs[1]))
    return beta * (1.0 - rho1)


def simulate_batch(het: Heterogeneity, n_items: int, seed: int = 0) -> list[Cascade]:
    """Synthetic dataset of heterogeneous exponential-kernel cascades."""
    if n_items == 0:
        return []
    params = sample_item_params(het, n_items, seed)
    out = []
    for i, p in enumerate(params):
        cfg = SimConfig(p, "exponential", het.mark_law, het.t_max, het.max_events, seed)
        c = simulate(cfg, rng=make_rng(seed, 1, i), item_id=f"item{i:06d}")
        noise_rng = make_rng(seed, 2, i)
        noise = het.attr_noise * noise_rng.standard_normal(3)
        attrs = np.concatenate([encode_attrs(p) + noise, noise_rng.standard_normal(het.n_distractors)])
        out.append(c.replace(static_attrs=attrs, created_at=float(i)))
    return out
