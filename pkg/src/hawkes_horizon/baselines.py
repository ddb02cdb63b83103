"""Comparison methods: RPP, SEISMIC-CF, per-horizon point models (PB) and
horizon-as-feature models (HF)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .forecaster import TrainingSet, UnsupportedHorizon, count_label, default_regressor, inverse_label
from .hawkes_core import (
    INF,
    Cascade,
    DomainError,
    PowerLawKernel,
    PowerLawKernelParams,
    power_law_primitive,
)

# ---------------------------------------------------------------------------
# Reinforced Poisson process
# ---------------------------------------------------------------------------

_T_MIN = 1e-6  # seconds; lognormal density vanishes at 0


@dataclass(frozen=True)
class RppParams:
    p: float
    mu_ln: float
    sigma_ln: float

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError("p must be > 0")
        if not self.sigma_ln > 0:
            raise DomainError("sigma_ln must be > 0")

    def cdf(self, t):
        t = np.maximum(np.asarray(t, dtype=float), _T_MIN)
        with np.errstate(divide="ignore"):
            z = (np.log(t) - self.mu_ln) / self.sigma_ln
        return special.ndtr(z)


@dataclass
class RppFitInfo:
    loglik: float
    iterations: int
    wall_time: float
    converged: bool
    n_events: int


def _lognormal_cdf(t, mu, sigma):
    return special.ndtr((np.log(t) - mu) / sigma)


def rpp_loglik(params: RppParams | Sequence[float], times: np.ndarray, s: float) -> float:
    """Log-likelihood of events 2..n in ``(T_1, s]``, conditioning on the first event.

    Intensity ``p f(t) N(t-)``; the compensator is ``p sum_i i (F(T_{i+1}) - F(T_i))``
    with ``T_{n+1} = s``.
    """
    if isinstance(params, RppParams):
        p, mu, sigma = params.p, params.mu_ln, params.sigma_ln
    else:
        p, mu, sigma = params
    t = np.maximum(np.asarray(times, dtype=float), _T_MIN)
    n = t.size
    if n < 2:
        raise DomainError("need at least two events")
    lt = np.log(t[1:])
    log_f = -lt - math.log(sigma) - 0.5 * math.log(2 * math.pi) - (lt - mu) ** 2 / (2 * sigma**2)
    F = _lognormal_cdf(np.append(t, max(s, t[-1])), mu, sigma)
    comp = p * float(np.dot(np.arange(1, n + 1), np.diff(F)))
    return float((n - 1) * math.log(p) + log_f.sum() + np.log(np.arange(1, n)).sum() - comp)


def rpp_fit(cascade: Cascade, s: float, restarts: int = 3, max_iter: int = 500,
            tol: float = 1e-8) -> tuple[RppParams, RppFitInfo]:
    """Maximum-likelihood RPP parameters from the events observed by ``s``.

    L-BFGS-B over ``(log p, mu_ln, log sigma_ln)`` from ``restarts``
    deterministic starting points; the best iterate is returned and
    ``converged`` is False if no run met the tolerance.
    """
    start = time.perf_counter()
    n = cascade.count_through(s)
    if n < 2:
        raise DomainError("RPP fit needs at least two events before s")
    t = np.maximum(cascade.times[:n].astype(float), _T_MIN)
    lt = np.log(t[1:])
    idx = np.arange(1, n + 1)
    log_fact = float(np.log(np.arange(1, n)).sum())
    s_eff = max(s, float(t[-1]))
    log_t_all = np.log(np.append(t, s_eff))
    sum_lt = float(lt.sum())

    def negll(z):
        log_p, mu, log_sigma = z
        sigma = math.exp(log_sigma)
        F = special.ndtr((log_t_all - mu) / sigma)
        comp = math.exp(log_p) * float(np.dot(idx, np.diff(F)))
        quad = float(np.sum((lt - mu) ** 2)) / (2 * sigma * sigma)
        ll = (n - 1) * (log_p - log_sigma - 0.5 * math.log(2 * math.pi)) - sum_lt - quad + log_fact - comp
        return -ll

    mu0 = float(lt.mean())
    sd0 = max(float(lt.std()), 0.1)
    starts = [(mu0, sd0), (mu0 + sd0, 1.5 * sd0), (mu0 - sd0, 0.7 * sd0)][:max(1, restarts)]
    bounds = [(-20.0, 10.0), (math.log(_T_MIN), 40.0), (math.log(0.01), math.log(20.0))]
    best, iters, converged = None, 0, False
    for mu_i, sd_i in starts:
        F = _lognormal_cdf(np.append(t, s_eff), mu_i, sd_i)
        denom = float(np.dot(idx, np.diff(F)))
        p_i = (n - 1) / denom if denom > 0 else 1.0
        z0 = np.clip([math.log(p_i), mu_i, math.log(sd_i)], [b[0] for b in bounds], [b[1] for b in bounds])
        res = optimize.minimize(negll, z0, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": max_iter, "ftol": tol})
        iters += int(res.nit)
        converged |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    log_p, mu, log_sigma = best.x
    params = RppParams(math.exp(log_p), float(mu), math.exp(log_sigma))
    info = RppFitInfo(-float(best.fun), iters, time.perf_counter() - start, converged, n)
    return params, info


def rpp_predict(params: RppParams, N_s, s: float, t):
    """Expected N(t) given N(s): ``N_s exp(p (F(t) - F(s)))``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < s):
        raise DomainError("need t >= s")
    gain = np.where(np.isinf(t_arr), 1.0, params.cdf(np.where(np.isinf(t_arr), 1.0, t_arr))) - params.cdf(s)
    out = np.asarray(N_s, dtype=float) * np.exp(params.p * gain)
    return float(out) if out.ndim == 0 else out


def rpp_simulate(params: RppParams, rng: np.random.Generator, t_max: float = INF,
                 t1: float = 0.0, max_events: int = 1_000_000, item_id: str = "rpp") -> Cascade:
    """Exact simulation by inverting the integrated intensity ``p N (F(u) - F(t))``."""
    times = [t1]
    u = float(params.cdf(t1)) if t1 > 0 else 0.0
    u_max = 1.0 if math.isinf(t_max) else float(params.cdf(t_max))
    while len(times) < max_events:
        u += rng.exponential() / (params.p * len(times))
        if u >= u_max:
            break
        times.append(math.exp(params.mu_ln + params.sigma_ln * float(special.ndtri(u))))
    truncated = len(times) >= max_events
    return Cascade(item_id, np.asarray(times), truncated=truncated, observed_until=t_max)


# ---------------------------------------------------------------------------
# SEISMIC-CF
# ---------------------------------------------------------------------------

# Memory kernel of the SEISMIC reference implementation (rates per second):
# flat at 6.49e-4 for 5 minutes, then a power-law tail with exponent 1.242.
SEISMIC_KERNEL = PowerLawKernelParams(phi0=6.49e-4, tau_cut=300.0, theta=0.242)


@dataclass
class SeismicState:
    """Configuration of the SEISMIC-CF estimator.

    ``n_star`` (mean degree of future sharers) defaults to ``d_const``.
    With ``smoothing`` the infectiousness is estimated from a trailing window
    of length ``clip(s / 2, min_window, max_window)`` with a triangular weight
    favouring recent events.
    """

    kernel: PowerLawKernelParams = SEISMIC_KERNEL
    d_const: float = 1.0
    n_star: float | None = None
    smoothing: bool = False
    min_window: float = 300.0
    max_window: float = 7200.0
    max_branching: float = 0.95

    @property
    def kernel_obj(self) -> PowerLawKernel:
        return PowerLawKernel(self.kernel)

    @property
    def degree_future(self) -> float:
        return self.d_const if self.n_star is None else self.n_star


def _triangular_exposure(times: np.ndarray, s: float, w: float, k: PowerLawKernelParams) -> np.ndarray:
    """``int_{s-w}^{s} K(u) phi(u - T_j) du`` per event, ``K(u) = (u - s + w) / w``."""
    phi0, tau, theta = k.phi0, k.tau_cut, k.theta
    c = times - s + w                 # K = (x + c) / w in terms of x = u - T_j
    x_lo = np.maximum(s - w - times, 0.0)
    x_hi = s - times
    # flat part x in [x_lo, min(x_hi, tau)]
    a, b = x_lo, np.minimum(x_hi, tau)
    flat = np.where(b > a, phi0 / w * ((b * b - a * a) / 2 + c * (b - a)), 0.0)
    # tail part x in [max(x_lo, tau), x_hi]
    a, b = np.maximum(x_lo, tau), x_hi
    live = b > a
    a, b = np.where(live, a, tau), np.where(live, b, tau)
    if theta == 1.0:
        lin = np.log(b / a)
    else:
        lin = (b ** (1 - theta) - a ** (1 - theta)) / (1 - theta)
    if theta == 0.0:
        const = np.log(b / a)
    else:
        const = (a ** (-theta) - b ** (-theta)) / theta
    tail = np.where(live, phi0 * tau ** (1 + theta) / w * (lin + c * const), 0.0)
    return flat + tail


def seismic_estimate_p(cascade: Cascade, s: float, state: SeismicState = SeismicState()) -> float:
    """Infectiousness ``N(s) / sum_i d Phi(s - T_i)`` (optionally window-smoothed)."""
    n = cascade.count_through(s)
    t = cascade.times[:n]
    if state.smoothing:
        w = min(max(s / 2, state.min_window), state.max_window)
        recent = t[t >= s - w]
        num = float(np.sum(1.0 - (s - recent) / w))
        den = state.d_const * float(np.sum(_triangular_exposure(t, s, w, state.kernel)))
    else:
        k = state.kernel
        num = float(n)
        den = state.d_const * float(power_law_primitive(s - t, k.phi0, k.tau_cut, k.theta).sum())
    if not den > 0:
        raise DomainError("zero exposure; infectiousness undefined")
    return num / den


@dataclass
class SeismicPrediction:
    value: float
    branching: float
    capped: bool


def seismic_predict(cascade: Cascade, s: float, p_hat: float, d_const: float | None = None,
                    state: SeismicState = SeismicState(), detail: bool = False):
    """Expected final size ``N(s) + p R / (1 - p n* int phi)``.

    ``R = d sum_i (int phi - Phi(s - T_i))`` is the exposure still to come
    from events already observed; the denominator accounts for all later
    generations. A supercritical factor is capped at ``state.max_branching``.
    """
    if p_hat < 0:
        raise DomainError("infectiousness must be >= 0")
    d = state.d_const if d_const is None else d_const
    n_star = d if state.n_star is None else state.n_star
    n = cascade.count_through(s)
    if p_hat == 0:
        out = SeismicPrediction(float(n), 0.0, False)
        return out if detail else out.value
    k = state.kernel
    total = state.kernel_obj.total()
    seen = power_law_primitive(s - cascade.times[:n], k.phi0, k.tau_cut, k.theta)
    residual = d * (n * total - float(seen.sum()))
    branching = p_hat * n_star * total
    capped = branching > state.max_branching
    b = min(branching, state.max_branching)
    out = SeismicPrediction(n + p_hat * residual / (1.0 - b), branching, capped)
    return out if detail else out.value


# ---------------------------------------------------------------------------
# Point-based and horizon-as-feature learners
# ---------------------------------------------------------------------------


class PointModels:
    """PB: one count regressor per horizon, no extrapolation."""

    name = "PB"

    def __init__(self, regressors: dict, schema, log_offset: float = 1.0):
        self.regressors = {float(k): v for k, v in regressors.items()}
        self.schema = schema
        self.log_offset = log_offset

    @property
    def horizons(self) -> tuple[float, ...]:
        return tuple(sorted(self.regressors))

    def supports(self, delta: float) -> bool:
        return float(delta) in self.regressors

    def predict(self, features, N_s, delta):
        if not self.supports(delta):
            raise UnsupportedHorizon(f"PB has no model for horizon {delta}")
        X = np.asarray(features, dtype=float)
        y = self.regressors[float(delta)].predict(np.atleast_2d(X))
        out = np.asarray(N_s, dtype=float) + np.maximum(inverse_label(y, self.log_offset), 0.0)
        return float(out[0]) if X.ndim == 1 else out


def train_pb(training_set: TrainingSet, horizons: Sequence[float], hyperparams: dict | None = None,
             regressor_factory: Callable | None = None, log_offset: float = 1.0,
             seed: int = 0) -> PointModels:
    hyper = dict(hyperparams or {})
    factory = regressor_factory or (lambda: default_regressor(seed, **hyper))
    regs = {}
    for h in horizons:
        y = count_label(training_set.column(float(h)), log_offset)
        regs[float(h)] = factory().fit(training_set.X, y)
    return PointModels(regs, training_set.schema, log_offset)


class HorizonFeatureModel:
    """HF: a single regressor with the horizon (seconds) as an extra feature."""

    def __init__(self, regressor, horizons: Sequence[float], schema, log_offset: float = 1.0,
                 name: str = "HF"):
        self.regressor = regressor
        self.horizons = tuple(float(h) for h in horizons)
        self.schema = schema
        self.log_offset = log_offset
        self.name = name

    @property
    def inflation(self) -> int:
        return len(self.horizons)

    def supports(self, delta: float) -> bool:
        return math.isfinite(delta) or delta in self.horizons

    def predict(self, features, N_s, delta):
        if not self.supports(delta):
            raise UnsupportedHorizon(f"{self.name} was not trained with horizon {delta}")
        X = np.atleast_2d(np.asarray(features, dtype=float))
        Xa = np.column_stack([X, np.full(X.shape[0], float(delta))])
        y = self.regressor.predict(Xa)
        out = np.asarray(N_s, dtype=float) + np.maximum(inverse_label(y, self.log_offset), 0.0)
        return float(out[0]) if np.asarray(features).ndim == 1 else out


def hf_design(training_set: TrainingSet, horizons: Sequence[float], log_offset: float = 1.0):
    """Replicate every example once per horizon, appending the horizon as a feature."""
    Xs, ys = [], []
    for h in horizons:
        h = float(h)
        X = training_set.X
        Xs.append(np.column_stack([X, np.full(X.shape[0], h)]))
        ys.append(count_label(training_set.column(h), log_offset))
    return np.vstack(Xs), np.concatenate(ys)


def train_hf(training_set: TrainingSet, horizons: Sequence[float], hyperparams: dict | None = None,
             regressor_factory: Callable | None = None, log_offset: float = 1.0,
             seed: int = 0, name: str = "HF") -> HorizonFeatureModel:
    hyper = dict(hyperparams or {})
    factory = regressor_factory or (lambda: default_regressor(seed, **hyper))
    X, y = hf_design(training_set, horizons, log_offset)
    return HorizonFeatureModel(factory().fit(X, y), horizons, training_set.schema, log_offset, name)
