"""Closed-form quantities for self-excited point processes.

Exponential kernel with marks ``Y = beta * Z`` and the power-law kernel used
by SEISMIC-style models. Times are seconds since item creation; ``INF``
stands for an unbounded horizon and every horizon formula branches on it
explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

INF = math.inf
ALPHA_FLOOR = 1e-9


class DomainError(ValueError):
    """Argument outside the domain where a formula is defined."""


def is_inf(x: float) -> bool:
    return isinstance(x, (float, np.floating)) and math.isinf(x) and x > 0


def one_minus_exp(x):
    """``1 - exp(-x)`` without cancellation for small ``x``; ``x = inf`` gives 1."""
    out = -np.expm1(-np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Cascade:
    """Event history of one content item.

    ``times`` are seconds since creation (nondecreasing, >= 0). ``marks`` are
    the intensity jump sizes contributed by each event. ``truncated`` is set
    when the generator or the source stopped before the cascade ended;
    ``observed_until`` is the end of the observation window.
    """

    item_id: str
    times: np.ndarray
    marks: np.ndarray | None = None
    created_at: float = 0.0
    static_attrs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truncated: bool = False
    observed_until: float = INF

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        marks = (
            np.ones_like(times)
            if self.marks is None
            else np.array(self.marks, dtype=float).reshape(-1)
        )
        attrs = np.array(self.static_attrs, dtype=float).reshape(-1)
        if marks.shape != times.shape:
            raise ValueError("times and marks must have the same length")
        if times.size:
            if times[0] < 0 or np.any(np.diff(times) < 0):
                raise ValueError("event times must be nonnegative and nondecreasing")
            if np.any(marks < 0):
                raise ValueError("marks must be nonnegative")
        for arr in (times, marks, attrs):
            arr.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "static_attrs", attrs)

    def __len__(self) -> int:
        return self.times.size

    def count_before(self, t: float) -> int:
        """N(t): number of events in ``[0, t)``."""
        return int(np.searchsorted(self.times, t, side="left"))

    def count_through(self, t: float) -> int:
        """Number of events in ``[0, t]``."""
        return int(np.searchsorted(self.times, t, side="right"))

    @property
    def coverage(self) -> float:
        """Last instant at which the count is known to be complete."""
        if self.truncated:
            return float(self.times[-1]) if self.times.size else 0.0
        return self.observed_until

    def replace(self, **changes) -> "Cascade":
        kw = dict(
            item_id=self.item_id,
            times=self.times,
            marks=self.marks,
            created_at=self.created_at,
            static_attrs=self.static_attrs,
            truncated=self.truncated,
            observed_until=self.observed_until,
        )
        kw.update(changes)
        return Cascade(**kw)


@dataclass(frozen=True)
class HawkesExpParams:
    """Exponential-kernel Hawkes model.

    beta: kernel decay rate (1/s). rho1, rho2: first two moments of the mark
    scale Z, so each event raises the intensity by ``beta * Z``.
    lambda0: intensity at creation (events/s).
    """

    beta: float
    rho1: float
    rho2: float
    lambda0: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        if not 0 <= self.rho1 < 1:
            raise DomainError(f"rho1 must lie in [0, 1), got {self.rho1}")
        if self.rho2 < self.rho1**2 * (1 - 1e-12):
            raise DomainError("rho2 must be >= rho1**2")
        if self.lambda0 < 0:
            raise DomainError("lambda0 must be >= 0")
        if self.alpha < ALPHA_FLOOR:
            raise DomainError(f"alpha = {self.alpha} is below {ALPHA_FLOOR}")

    @property
    def mu(self) -> float:
        """Branching ratio (expected direct offspring per event)."""
        return self.rho1

    @property
    def alpha(self) -> float:
        """Effective growth exponent ``beta * (1 - rho1)``."""
        return self.beta * (1.0 - self.rho1)

    @property
    def sigma2(self) -> float:
        return max(self.rho2 - self.rho1**2, 0.0)

    @property
    def Sigma2(self) -> float:
        """Ratio of the infinite-horizon conditional variance to ``lambda(s)/alpha``.

        Equals ``(1 + sigma2) / (1 - rho1)**2``: second moment of the total
        progeny of one immigrant times ``(1 - rho1)``.
        """
        return (1.0 + self.sigma2) / (1.0 - self.rho1) ** 2

    def with_lambda0(self, lambda0: float) -> "HawkesExpParams":
        return HawkesExpParams(self.beta, self.rho1, self.rho2, lambda0)


@dataclass(frozen=True)
class PowerLawKernelParams:
    phi0: float
    tau_cut: float
    theta: float
    p: float = 1.0

    def __post_init__(self):
        if not (self.phi0 > 0 and self.tau_cut > 0 and self.p > 0):
            raise DomainError("phi0, tau_cut and p must be > 0")
        if not math.isfinite(self.theta):
            raise DomainError("theta must be finite")


@dataclass(frozen=True)
class HorizonQuery:
    s: float
    delta: float

    def __post_init__(self):
        if self.s < 0:
            raise DomainError("prediction time must be >= 0")
        if not self.delta > 0:
            raise DomainError("horizon must be > 0")

    @property
    def target(self) -> float:
        return self.s + self.delta


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def kernel_exp(x, beta: float):
    """``exp(-beta * x)`` for elapsed time ``x >= 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise DomainError("elapsed time must be >= 0")
    out = np.exp(-beta * xa)
    return float(out) if out.ndim == 0 else out


def kernel_power_law(x, params: PowerLawKernelParams):
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise DomainError("elapsed time must be >= 0")
    tau = params.tau_cut
    with np.errstate(divide="ignore"):
        tail = params.phi0 * (tau / np.maximum(xa, tau)) ** (1.0 + params.theta)
    out = np.where(xa <= tau, params.phi0, tail)
    return float(out) if out.ndim == 0 else out


class ExponentialKernel:
    def __init__(self, beta: float):
        if not beta > 0:
            raise DomainError("beta must be > 0")
        self.beta = beta

    def value(self, x):
        return kernel_exp(x, self.beta)

    def primitive(self, x):
        """``int_0^x exp(-beta u) du``; ``x`` may be ``inf``."""
        xa = np.maximum(np.asarray(x, dtype=float), 0.0)
        out = -np.expm1(-self.beta * xa) / self.beta
        return float(out) if out.ndim == 0 else out

    def total(self) -> float:
        return 1.0 / self.beta


def power_law_primitive(x: np.ndarray, phi0: float, tau: float, theta: float) -> np.ndarray:
    """``int_0^x phi`` for the power-law kernel, ``x >= 0`` (``inf`` allowed).

    Written without branches: for ``x <= tau`` the ratio ``tau / max(x, tau)``
    is 1 and the tail term vanishes.
    """
    r = tau / np.maximum(x, tau)
    if theta > 0:
        tail = (1.0 - r**theta) / theta
    elif theta == 0:
        tail = -np.log(r)
    else:
        with np.errstate(divide="ignore"):
            tail = (1.0 - r**theta) / theta
    return phi0 * (np.minimum(x, tau) + tau * tail)


class PowerLawKernel:
    def __init__(self, params: PowerLawKernelParams):
        self.params = params

    def value(self, x):
        return kernel_power_law(x, self.params)

    def primitive(self, x):
        xa = np.maximum(np.asarray(x, dtype=float), 0.0)
        out = power_law_primitive(xa, self.params.phi0, self.params.tau_cut, self.params.theta)
        return float(out) if out.ndim == 0 else out

    def total(self) -> float:
        if self.params.theta <= 0:
            raise DomainError("power-law kernel integral diverges for theta <= 0")
        p = self.params
        return p.phi0 * p.tau_cut * (1.0 + 1.0 / p.theta)


# ---------------------------------------------------------------------------
# Intensity
# ---------------------------------------------------------------------------


def intensity_at(cascade: Cascade, params: HawkesExpParams, t: float) -> float:
    """lambda(t) from events strictly before ``t`` via the O(1)-per-event recursion."""
    if t < 0:
        raise DomainError("t must be >= 0")
    beta = params.beta
    lam = params.lambda0
    last = 0.0
    n = cascade.count_before(t)
    times, marks = cascade.times, cascade.marks
    for i in range(n):
        lam = lam * math.exp(-beta * (times[i] - last)) + marks[i]
        last = times[i]
    return lam * math.exp(-beta * (t - last))


def intensity_naive(cascade: Cascade, params: HawkesExpParams, t: float) -> float:
    """Direct O(n) sum; reference for :func:`intensity_at`."""
    n = cascade.count_before(t)
    tt = cascade.times[:n]
    yy = cascade.marks[:n]
    return float(
        params.lambda0 * math.exp(-params.beta * t)
        + np.sum(yy * np.exp(-params.beta * (t - tt)))
    )


class ExpIntensityState:
    """Streaming lambda(t) for the exponential kernel: two floats of state."""

    __slots__ = ("beta", "value", "last")

    def __init__(self, beta: float, lambda0: float):
        self.beta = beta
        self.value = lambda0
        self.last = 0.0

    def observe(self, t: float, mark: float) -> None:
        if t < self.last:
            raise ValueError("out-of-order event")
        self.value = self.value * math.exp(-self.beta * (t - self.last)) + mark
        self.last = t

    def at(self, t: float) -> float:
        if t < self.last:
            raise ValueError("query before last observed event")
        return self.value * math.exp(-self.beta * (t - self.last))


# ---------------------------------------------------------------------------
# Conditional expectations and bounds
# ---------------------------------------------------------------------------


def baseline_primitive(kernel, lambda0: float) -> Callable[[float], float]:
    """Lambda_0 for the convention ``lambda_0(t) = lambda(0) * phi(t) / phi(0)``."""
    phi0 = float(kernel.value(0.0))

    def Lambda0(x):
        return lambda0 * kernel.primitive(x) / phi0

    return Lambda0


def residual_mass(cascade: Cascade, kernel, lambda0_fn, s: float, t: float) -> float:
    """Lambda(s, t): expected first-generation count in ``[s, t]`` given the history at ``s``.

    ``lambda0_fn`` is either a number (initial intensity, baseline shaped like
    the kernel) or a callable returning the baseline primitive Lambda_0(x).
    """
    if not 0 <= s <= t:
        raise DomainError("need 0 <= s <= t")
    if is_inf(t):
        kernel.total()  # raises on divergence
    Lambda0 = (
        lambda0_fn
        if callable(lambda0_fn)
        else baseline_primitive(kernel, float(lambda0_fn))
    )
    if s == t:
        return 0.0
    n = cascade.count_before(s)
    tt = cascade.times[:n]
    yy = cascade.marks[:n]
    base = Lambda0(t) - Lambda0(s)
    excited = np.sum(yy * (kernel.primitive(t - tt) - kernel.primitive(s - tt)))
    return float(base + excited)


def expected_count_exp(lambda_s, params: HawkesExpParams | float, delta):
    """E[N(s + delta) - N(s) | F_s] = lambda(s) (1 - exp(-alpha delta)) / alpha.

    ``params`` may be a :class:`HawkesExpParams` or the growth exponent
    alpha (scalar or array broadcasting against ``lambda_s`` and ``delta``).
    """
    alpha = params.alpha if isinstance(params, HawkesExpParams) else np.asarray(params, dtype=float)
    lam = np.asarray(lambda_s, dtype=float)
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0) or np.any(lam < 0):
        raise DomainError("need lambda_s >= 0 and delta >= 0")
    out = lam * one_minus_exp(alpha * d) / alpha
    return float(out) if out.ndim == 0 else out


def count_bounds(Lambda_st: float, mu: float) -> tuple[float, float]:
    """Lower and upper bounds on the conditional expected count for a stable process."""
    if not 0 <= mu < 1:
        raise DomainError(f"branching ratio must lie in [0, 1), got {mu}")
    if Lambda_st < 0:
        raise DomainError("Lambda must be >= 0")
    return Lambda_st, Lambda_st / (1.0 - mu)


def conditional_variance_exp(lambda_s, params: HawkesExpParams, delta):
    """Var[N(s + delta) - N(s) | F_s] for the exponential kernel.

    With x = alpha * delta and q = 1 - rho1::

        lambda(s)/alpha * [ (1 + rho1)/q (1 - e^-x)
                            + rho2/q^2 (1 - e^-2x)
                            - 2 (rho1/q + rho2/q^2) x e^-x ]

    which tends to ``Sigma2 * lambda(s) / alpha``. Obtained from the second
    u-derivative of the generating-function ODE ``A' = 1 - beta A - u psi(A)``.
    """
    lam = np.asarray(lambda_s, dtype=float)
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0) or np.any(lam < 0):
        raise DomainError("need lambda_s >= 0 and delta >= 0")
    a, r1, r2 = params.alpha, params.rho1, params.rho2
    q = 1.0 - r1
    x = a * d
    with np.errstate(invalid="ignore", over="ignore"):
        e1 = np.exp(-x)
        xe = np.where(np.isinf(x), 0.0, x * e1)
    bracket = (
        (1 + r1) / q * one_minus_exp(x)
        + r2 / q**2 * one_minus_exp(2 * x)
        - 2 * (r1 / q + r2 / q**2) * xe
    )
    out = lam / a * np.maximum(bracket, 0.0)
    return float(out) if out.ndim == 0 else out


def characteristic_time(gamma: float, alpha: float) -> float:
    """Horizon at which the expected increment reaches fraction ``gamma`` of its limit."""
    if not 0 < gamma < 1:
        raise DomainError("gamma must lie in (0, 1)")
    if not alpha > 0:
        raise DomainError("alpha must be > 0")
    return c_gamma(gamma) / alpha


def c_gamma(gamma: float) -> float:
    return -math.log1p(-gamma)


def coefficient_of_variation_limit(N_s: float, expected_final: float, Sigma2: float) -> float:
    """Limit of sd/mean of N(t) given F_s, as ``t -> inf``."""
    if expected_final <= 0:
        raise DomainError("expected final count must be > 0")
    return math.sqrt(Sigma2 / expected_final * (1.0 - N_s / expected_final))
