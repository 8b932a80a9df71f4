"""Transition laws and exact samplers for the scalar OU process

    dX_t = dB_t - gamma * X_t dt,   X_0 = a > 0,

and for the radial part R_t = |vec X_t| of its 3-dimensional analogue.

Everything here rests on the representation

    X_t = e^{-gamma t} * (a + beta(tau(t))),   tau(t) = (e^{2 gamma t} - 1) / (2 gamma),

for a standard Brownian motion beta, which turns OU marginals into Brownian
marginals on the deterministic clock tau.  gamma may have either sign;
gamma = 0 is the Brownian limit and is handled as a first-class value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this |2 gamma t| the clock is evaluated by series; the quartic term
# it drops is ~1e-18 relative, far below double precision.
SERIES_THRESHOLD = 1e-4

# exp(2 gamma t) overflows past ~709; refuse a little early.
_EXP_ARG_MAX = 700.0


@dataclass(frozen=True)
class ProcessParams:
    """Rate gamma (any sign, 1/time) and starting point a > 0."""

    gamma: float
    a: float

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"a must be finite and > 0, got {self.a}")


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


@dataclass(frozen=True)
class RadialLaw:
    """Law of the norm of a 3-d isotropic Gaussian: mean vector (center, 0, 0),
    per-coordinate variance sigma2."""

    center: float
    sigma2: float

    def __post_init__(self):
        if self.center < 0:
            raise ValueError(f"center must be >= 0, got {self.center}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")

    def mean_square(self) -> float:
        """E[R^2] = center^2 + 3 * sigma2."""
        return self.center**2 + 3.0 * self.sigma2


def _require_time(t: float) -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return t


def _tau(gamma: float, t: float) -> float:
    u = 2.0 * gamma * t
    if u > _EXP_ARG_MAX:
        raise OverflowError(
            f"exp(2*gamma*t) overflows for gamma*t = {gamma * t}; "
            "the requested horizon is outside the usable range"
        )
    if abs(u) < SERIES_THRESHOLD:
        v = gamma * t
        return t * (1.0 + v * (1.0 + v * (2.0 / 3.0 + v / 3.0)))
    return math.expm1(u) / (2.0 * gamma)


def time_change(params: ProcessParams, t: float) -> float:
    """Brownian clock tau(t) = (e^{2 gamma t} - 1) / (2 gamma).

    Strictly increasing in t with tau(0) = 0 and tau(t) > 0 for t > 0,
    whatever the sign of gamma.
    """
    return _tau(params.gamma, _require_time(t))


def ou_transition(params: ProcessParams, t: float) -> GaussianLaw:
    """Marginal law of X_t: N(a e^{-gamma t}, e^{-2 gamma t} tau(t))."""
    t = _require_time(t)
    # (1 - e^{-2 gamma t}) / (2 gamma) is tau with gamma negated; this route
    # stays finite for large gamma*t > 0 where tau itself would overflow.
    variance = _tau(-params.gamma, t)
    return GaussianLaw(mean=params.a * math.exp(-params.gamma * t), variance=variance)


def radial_transition(params: ProcessParams, t: float) -> RadialLaw:
    """Marginal law of R_t = |vec X_t| for the 3-d process started at (a, 0, 0).

    Each coordinate is an independent scalar OU, so R_t is the norm of an
    isotropic Gaussian with center a e^{-gamma t} and per-coordinate variance
    equal to the scalar transition variance.
    """
    law = ou_transition(params, t)
    return RadialLaw(center=law.mean, sigma2=law.variance)


def sample_ou_exact(
    params: ProcessParams,
    t: float,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw from the exact (unkilled) marginal of X_t; values may be <= 0.

    Returns a float when size is None, else an ndarray of that length.
    """
    law = ou_transition(params, t)
    sd = math.sqrt(law.variance)
    z = rng.standard_normal(size)
    return law.mean + sd * z


def sample_radial_exact(
    params: ProcessParams,
    t: float,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw R_t exactly: norm of a 3-d Gaussian draw; strictly positive a.s."""
    law = radial_transition(params, t)
    sd = math.sqrt(law.sigma2)
    if size is None:
        vec = sd * rng.standard_normal(3)
        vec[0] += law.center
        return float(np.sqrt(vec @ vec))
    vec = sd * rng.standard_normal((int(size), 3))
    vec[:, 0] += law.center
    return np.sqrt(np.einsum("ij,ij->i", vec, vec))


def martingale_value(params: ProcessParams, x, t: float):
    """x * e^{gamma t}; applied to X_t it has constant expectation a."""
    return x * math.exp(params.gamma * float(t))
