"""Radon-Nikodym weights between the killed OU law and the radial OU law,
and the Monte Carlo estimators that transport expectations across them.

With P the OU law killed at 0 and Q the radial law (both started at a):

    forward:  dQ/dP at time t   = (X_{t and T0} / a) e^{gamma t}   (0 once absorbed)
    inverse:  1_{t<T0} dP       = (a / X_t) e^{-gamma t} dQ

so bounded killed-OU expectations can be estimated from exact radial draws
and radial expectations from killed-OU paths.  Test functionals are bounded
by construction: the inverse weight carries a 1/X_t whose variance is finite
only against bounded integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import survival_probability
from .harness import MCEstimate, aggregate
from .process import ProcessParams, sample_radial_exact
from .rng import block_sizes, derive_seed, map_blocks, stream
from .simulate import KilledPaths, TimeGrid, simulate_killed_ou_exact

_KINDS = ("constant_one", "indicator_above", "indicator_below", "capped_polynomial")


@dataclass(frozen=True)
class TestFunctional:
    """A bounded test function on (0, inf): indicators, capped monomials, 1."""

    __test__ = False  # keep pytest collection away from the Test* name

    kind: str
    c: float | None = None
    k: int | None = None
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind in ("indicator_above", "indicator_below"):
            if self.c is None or not math.isfinite(self.c):
                raise ValueError("indicator threshold must be finite")
        if self.kind == "capped_polynomial":
            if self.k is None or self.k < 0 or self.k != int(self.k):
                raise ValueError("polynomial degree must be an integer >= 0")
            if self.cap is None or not (math.isfinite(self.cap) and self.cap > 0):
                raise ValueError("cap must be finite and > 0: uncapped polynomials are unbounded")

    @classmethod
    def constant_one(cls) -> "TestFunctional":
        return cls("constant_one")

    @classmethod
    def indicator_above(cls, c: float) -> "TestFunctional":
        return cls("indicator_above", c=float(c))

    @classmethod
    def indicator_below(cls, c: float) -> "TestFunctional":
        return cls("indicator_below", c=float(c))

    @classmethod
    def capped_polynomial(cls, k: int, cap: float) -> "TestFunctional":
        return cls("capped_polynomial", k=int(k), cap=float(cap))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant_one":
            out = np.ones_like(x)
        elif self.kind == "indicator_above":
            out = (x > self.c).astype(float)
        elif self.kind == "indicator_below":
            out = (x < self.c).astype(float)
        else:
            out = np.minimum(x**self.k, self.cap)
        return float(out) if out.ndim == 0 else out

    def breakpoints(self) -> tuple[float, ...]:
        """Discontinuity/kink locations, for quadrature splitting."""
        if self.kind in ("indicator_above", "indicator_below"):
            return (self.c,)
        if self.kind == "capped_polynomial" and self.k > 0:
            return (self.cap ** (1.0 / self.k),)
        return ()

    def label(self) -> str:
        if self.kind == "constant_one":
            return "one"
        if self.kind == "capped_polynomial":
            return f"min(x^{self.k},{self.cap:g})"
        op = ">" if self.kind == "indicator_above" else "<"
        return f"1(x{op}{self.c:g})"


def default_functional_suite() -> tuple[TestFunctional, ...]:
    return (
        TestFunctional.constant_one(),
        TestFunctional.indicator_above(1.0),
        TestFunctional.indicator_below(0.5),
        TestFunctional.capped_polynomial(1, 10.0),
    )


@dataclass(frozen=True)
class WeightedSample:
    """One terminal draw with its measure-transport weight."""

    value: float
    weight: float

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"weight must be finite and >= 0, got {self.weight}")


def forward_weight(params: ProcessParams, paths: KilledPaths, t: float) -> np.ndarray:
    """(X_{t and T0} / a) e^{gamma t} per path; 0 for paths absorbed by t."""
    x = paths.values_at(t)  # already 0 after absorption
    return x * (math.exp(params.gamma * t) / params.a)


def inverse_weight(params: ProcessParams, r_value, t: float):
    """(a / r) e^{-gamma t} for r > 0."""
    r = np.asarray(r_value, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r_value must be > 0")
    out = (params.a / r) * math.exp(-params.gamma * float(t))
    return float(out) if out.ndim == 0 else out


def radial_weighted_sample(
    params: ProcessParams, t: float, rng: np.random.Generator
) -> WeightedSample:
    """One exact radial draw packaged with its inverse weight."""
    r = sample_radial_exact(params, t, rng)
    return WeightedSample(value=r, weight=inverse_weight(params, r, t))


# --- block workers (module level so they survive pickling) ----------------

def _weighted_radial_block(task):
    params, f, t, seed, block, n, weight_scale = task
    rng = stream(seed, block)
    r = sample_radial_exact(params, t, rng, size=n)
    vals = f(r) * inverse_weight(params, r, t)
    return vals * weight_scale if weight_scale != 1.0 else vals


def _killed_terminal_block(task):
    params, t, seed, block, n = task
    rng = stream(seed, block)
    grid = TimeGrid(np.array([0.0, t]))
    paths = simulate_killed_ou_exact(params, grid, rng, n)
    return paths.values[:, 1]


def _radial_terminal_block(task):
    params, t, seed, block, n = task
    rng = stream(seed, block)
    return sample_radial_exact(params, t, rng, size=n)


def _check_functional(f) -> None:
    if not isinstance(f, TestFunctional):
        raise TypeError(
            "estimators only accept the bounded TestFunctional suite; "
            f"got {type(f).__name__}"
        )


def _terminal_tasks(params, t, seed, n_paths):
    return [(params, t, seed, i, n) for i, n in enumerate(block_sizes(n_paths))]


def estimate_killed_expectation_via_Q(
    params: ProcessParams,
    f: TestFunctional,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
    weight_scale: float = 1.0,
) -> MCEstimate:
    """E[f(X_t) 1_{t<T0}] estimated from exact radial draws:
    average of f(R_t) (a/R_t) e^{-gamma t}.

    weight_scale multiplies every weight and exists as a negative-control
    hook; leave it at 1.0 for estimation.
    """
    _check_functional(f)
    tasks = [
        (params, f, t, seed, i, n, weight_scale)
        for i, n in enumerate(block_sizes(n_paths))
    ]
    chunks = map_blocks(_weighted_radial_block, tasks, workers)
    return aggregate(np.concatenate(chunks), seed=seed)


def estimate_killed_expectation_direct(
    params: ProcessParams,
    f: TestFunctional,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> MCEstimate:
    """E[f(X_t) 1_{t<T0}] by plain killed-OU simulation (the unweighted side
    of the transport identity)."""
    _check_functional(f)
    chunks = map_blocks(_killed_terminal_block, _terminal_tasks(params, t, seed, n_paths), workers)
    x = np.concatenate(chunks)
    return aggregate(f(x) * (x > 0.0), seed=seed)


def estimate_Q_expectation_via_P(
    params: ProcessParams,
    f: TestFunctional,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> MCEstimate:
    """E_Q[f(R_t)] estimated from killed-OU paths: average of
    f(X_t) (X_{t and T0}/a) e^{gamma t}; absorbed paths contribute 0."""
    _check_functional(f)
    chunks = map_blocks(_killed_terminal_block, _terminal_tasks(params, t, seed, n_paths), workers)
    x = np.concatenate(chunks)
    weights = x * (math.exp(params.gamma * t) / params.a)
    return aggregate(f(x) * weights, seed=seed)


def estimate_radial_expectation_direct(
    params: ProcessParams,
    f: TestFunctional,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> MCEstimate:
    """E_Q[f(R_t)] by exact radial sampling (comparator for the weighted
    killed-OU estimator)."""
    _check_functional(f)
    chunks = map_blocks(_radial_terminal_block, _terminal_tasks(params, t, seed, n_paths), workers)
    return aggregate(f(np.concatenate(chunks)), seed=seed)


@dataclass(frozen=True)
class ConditionalIdentityResult:
    """Both sides of E_Q[f/X_t] = E_Q[1/X_t] E_P[f | t < T0], estimated on
    three disjoint streams, with the delta-method combined stderr."""

    lhs: MCEstimate
    q_inverse_mean: MCEstimate
    conditional_mean: MCEstimate
    n_survivors: int

    @property
    def rhs(self) -> float:
        return self.q_inverse_mean.mean * self.conditional_mean.mean

    @property
    def combined_stderr(self) -> float:
        return math.sqrt(
            self.lhs.stderr**2
            + (self.conditional_mean.mean * self.q_inverse_mean.stderr) ** 2
            + (self.q_inverse_mean.mean * self.conditional_mean.stderr) ** 2
        )

    @property
    def gap_sigma(self) -> float:
        return (self.lhs.mean - self.rhs) / self.combined_stderr


def conditional_identity_detail(
    params: ProcessParams,
    f: TestFunctional,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> ConditionalIdentityResult:
    _check_functional(f)
    seed_lhs = derive_seed(seed, "conditional-lhs")
    seed_inv = derive_seed(seed, "conditional-qinv")
    seed_cond = derive_seed(seed, "conditional-killed")

    lhs_chunks = map_blocks(
        _radial_terminal_block, _terminal_tasks(params, t, seed_lhs, n_paths), workers
    )
    r = np.concatenate(lhs_chunks)
    lhs = aggregate(f(r) / r, seed=seed_lhs)

    inv_chunks = map_blocks(
        _radial_terminal_block, _terminal_tasks(params, t, seed_inv, n_paths), workers
    )
    q_inv = aggregate(1.0 / np.concatenate(inv_chunks), seed=seed_inv)

    killed_chunks = map_blocks(
        _killed_terminal_block, _terminal_tasks(params, t, seed_cond, n_paths), workers
    )
    x = np.concatenate(killed_chunks)
    survivors = x[x > 0.0]
    if survivors.size < 2:
        raise ValueError(
            f"only {survivors.size} surviving paths out of {n_paths}: "
            "n_paths too small for a conditional estimate"
        )
    cond = aggregate(f(survivors), seed=seed_cond)

    return ConditionalIdentityResult(
        lhs=lhs, q_inverse_mean=q_inv, conditional_mean=cond, n_survivors=survivors.size
    )


def conditional_identity_gap(
    params: ProcessParams,
    f: TestFunctional,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> float:
    """Gap between the two sides of the conditioning identity, in units of
    their combined standard error."""
    return conditional_identity_detail(params, f, t, n_paths, seed, workers).gap_sigma


@dataclass(frozen=True)
class CurvePoint:
    t: float
    estimate: MCEstimate
    closed_form: float


def local_martingale_curve(
    params: ProcessParams,
    times,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> list[CurvePoint]:
    """m(t) = E_Q[(1/X_t) e^{-gamma t}] by exact radial sampling, with the
    closed-form overlay S(t)/a.

    m decreases strictly from its limit 1/a at t = 0+: the expectation of
    this local martingale is not constant, which is exactly what makes it
    strict.
    """
    times = [float(t) for t in times]
    if not times or any(t <= 0 for t in times) or any(
        t2 <= t1 for t1, t2 in zip(times, times[1:])
    ):
        raise ValueError("times must be positive and strictly ascending")
    out = []
    for i, t in enumerate(times):
        seed_t = derive_seed(seed, "local-martingale", i)
        chunks = map_blocks(
            _radial_terminal_block, _terminal_tasks(params, t, seed_t, n_paths), workers
        )
        r = np.concatenate(chunks)
        est = aggregate(math.exp(-params.gamma * t) / r, seed=seed_t)
        out.append(CurvePoint(t=t, estimate=est, closed_form=survival_probability(params, t) / params.a))
    return out
