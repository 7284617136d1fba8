"""Monte Carlo check of the analytical failure rate.

Each trial covers ``horizon`` hours. Perception errors arrive as a Poisson
count and each one independently meets a dangerous situation with the
situation probability, so the failure count is a binomial thinning of the
error count. For a tree, the horizon is cut into equal exposure slices; every
slice lands in a (profile, speed range) cell with that cell's probability and
the leaves of each cell are simulated over the exposure it collected.

Random numbers are keyed by (seed, trial, draw slot), which makes results
independent of how trials are chunked or spread over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ValidationError
from .model import FailureModelTree, Leaf, failure_rate_extended
from .rng import uniforms

CHUNK = 1 << 16  # fixed so that results never depend on the worker count
_CELL_DRAW_BASE = 1 << 31  # draw slots for cell sampling, clear of the leaf slots


@dataclass(frozen=True)
class LeafTarget:
    """A single error type: error rate (errors/hour) and situation probability."""

    rate: float
    situation_probability: float

    def __post_init__(self):
        if not (self.rate >= 0) or math.isinf(self.rate):
            raise ValidationError("rate must be finite and >= 0")
        if not (0.0 <= self.situation_probability <= 1.0):
            raise ValidationError("situation probability must lie in [0, 1]")


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float
    trials: int
    seed: int
    target: LeafTarget | FailureModelTree
    slices: int = 1000
    workers: int = 1

    def __post_init__(self):
        if not (self.horizon > 0) or math.isinf(self.horizon):
            raise ValidationError("horizon must be finite and > 0")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if self.slices < 1:
            raise ValidationError("slices must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValidationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SimulationResult:
    empirical_lambda: float
    std_error: float
    trials: int
    analytical_lambda: float
    horizon: float
    seed: int
    total_errors: int
    total_failures: int

    @property
    def z_score(self) -> float:
        if self.std_error == 0:
            return 0.0 if self.empirical_lambda == self.analytical_lambda else math.inf
        return (self.empirical_lambda - self.analytical_lambda) / self.std_error

    def to_dict(self) -> dict:
        return {
            "units": {"rate": "1/h", "horizon": "h"},
            "empirical_lambda": self.empirical_lambda,
            "std_error": self.std_error,
            "analytical_lambda": self.analytical_lambda,
            "z_score": self.z_score,
            "trials": self.trials,
            "horizon": self.horizon,
            "seed": self.seed,
            "total_errors": self.total_errors,
            "total_failures": self.total_failures,
        }


# --- sampling primitives -----------------------------------------------------------

def poisson_from_uniform(u: np.ndarray, mu) -> np.ndarray:
    """Poisson variates by inversion; ``mu`` may be an array and may be 0."""
    mu = np.broadcast_to(np.asarray(mu, dtype=float), u.shape)
    out = np.zeros(u.shape, dtype=np.int64)
    pos = mu > 0
    if pos.any():
        out[pos] = stats.poisson.ppf(u[pos], mu[pos]).astype(np.int64)
    return out


def binomial_from_uniform(u: np.ndarray, n: np.ndarray, p) -> np.ndarray:
    """Binomial(n, p) variates by inversion, exact at p = 0 and p = 1."""
    n = np.asarray(n, dtype=np.int64)
    p = np.broadcast_to(np.asarray(p, dtype=float), u.shape)
    out = np.where(p >= 1.0, n, 0)
    mid = (n > 0) & (p > 0) & (p < 1)
    if mid.any():
        out[mid] = stats.binom.ppf(u[mid], n[mid], p[mid]).astype(np.int64)
    return out


def thin(errors: np.ndarray, p: float, u: np.ndarray) -> np.ndarray:
    """Number of errors that meet a dangerous situation: Binomial(errors, p).

    Equal in distribution to summing one Bernoulli(p) draw per error.
    """
    return binomial_from_uniform(u, errors, p)


def thin_bernoulli(errors: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Reference thinning with one Bernoulli draw per error (slow)."""
    return np.array([int((rng.random(int(x)) < p).sum()) for x in errors], dtype=np.int64)


# --- streaming moments ------------------------------------------------------------

@dataclass(frozen=True)
class Moments:
    """Count, mean and sum of squared deviations of a sample."""

    n: int
    mean: float
    m2: float

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls(0, 0.0, 0.0)
        mean = float(x.mean())
        return cls(int(x.size), mean, float(((x - mean) ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


def merge_pairwise(parts: list[Moments]) -> Moments:
    """Merge in a balanced binary tree over the given order."""
    if not parts:
        return Moments(0, 0.0, 0.0)
    while len(parts) > 1:
        nxt = [parts[k].merge(parts[k + 1]) for k in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


# --- simulation ---------------------------------------------------------------------

def _leaf_thinning(leaf: Leaf) -> tuple[float, float]:
    """Arrival rate and thinning probability for a leaf.

    Without rate multipliers this is (rate, effective situation probability).
    Multipliers above one raise the arrival rate so the thinning probability
    stays in [0, 1]; the mean failure rate is the same either way.
    """
    p = leaf.effective_situation_probability
    scale = 1.0
    if leaf.refinements:
        def weight(nodes):
            return sum(r.probability * r.rate_multiplier * (weight(r.children) if r.children else 1.0) for r in nodes)

        scale = max(1.0, weight(leaf.refinements))
    return leaf.rate * scale, min(1.0, p / scale)


def _run_chunk(seed, lo, hi, horizon, cells, slices):
    """Failures and errors per trial for trials [lo, hi).

    ``cells`` is a list of (probability, [(rate, p), ...]) per (profile, range).
    """
    t = np.arange(lo, hi, dtype=np.uint64)
    n = hi - lo
    if len(cells) == 1:
        share = [np.ones(n)]
    else:
        remaining = np.full(n, slices, dtype=np.int64)
        rest = 1.0
        share = []
        for k, (pc, _) in enumerate(cells[:-1]):
            u, _ = uniforms(seed, t, _CELL_DRAW_BASE + k)
            q = 0.0 if rest <= 0 else min(1.0, pc / rest)
            got = binomial_from_uniform(u, remaining, q)
            share.append(got / slices)
            remaining = remaining - got
            rest -= pc
        share.append(remaining / slices)

    failures = np.zeros(n, dtype=np.int64)
    errors = np.zeros(n, dtype=np.int64)
    slot = 0
    for (_, leaves), frac in zip(cells, share):
        for rate, p in leaves:
            u_x, u_f = uniforms(seed, t, slot)
            slot += 1
            x = poisson_from_uniform(u_x, rate * horizon * frac)
            errors += x
            failures += thin(x, p, u_f)
    return failures, errors


def _simulate(config: SimulationConfig, cells, analytical: float) -> SimulationResult:
    bounds = [(lo, min(lo + CHUNK, config.trials)) for lo in range(0, config.trials, CHUNK)]

    def job(b):
        f, x = _run_chunk(int(config.seed), b[0], b[1], config.horizon, cells, config.slices)
        return Moments.of(f), int(f.sum()), int(x.sum())

    if config.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    mom = merge_pairwise([p[0] for p in parts])
    return SimulationResult(
        empirical_lambda=mom.mean / config.horizon,
        std_error=math.sqrt(mom.variance / mom.n) / config.horizon,
        trials=config.trials,
        analytical_lambda=analytical,
        horizon=config.horizon,
        seed=int(config.seed),
        total_errors=sum(p[2] for p in parts),
        total_failures=sum(p[1] for p in parts),
    )


def simulate_leaf(config: SimulationConfig) -> SimulationResult:
    target = config.target
    if not isinstance(target, LeafTarget):
        raise ValidationError("simulate_leaf needs a LeafTarget")
    cells = [(1.0, [(target.rate, target.situation_probability)])]
    return _simulate(config, cells, target.rate * target.situation_probability)


def simulate_tree(config: SimulationConfig) -> SimulationResult:
    tree = config.target
    if not isinstance(tree, FailureModelTree):
        raise ValidationError("simulate_tree needs a FailureModelTree")
    cells = []
    for prof in tree.profiles:
        for i, p_i in enumerate(prof.speed_probability):
            leaves = [_leaf_thinning(l) for l in prof.leaves if l.range_index == i]
            cells.append((prof.probability * p_i, leaves))
    return _simulate(config, cells, failure_rate_extended(tree).lambda_per_hour)


def simulate(config: SimulationConfig) -> SimulationResult:
    if isinstance(config.target, FailureModelTree):
        return simulate_tree(config)
    return simulate_leaf(config)
