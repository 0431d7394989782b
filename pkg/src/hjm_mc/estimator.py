"""Monte Carlo price estimation with a statistical error bound.

Sums are taken with :func:`math.fsum` over samples in path order, so an
estimate is a deterministic function of its inputs whatever the number of
worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .forward import scheme_coefficients, simulate
from .grid import Grid
from .models import HjmModel
from .payoff import PayoffSpec, QuadratureRule, payoff_value, quad_f0
from .rng import stream_batch

DEFAULT_C0 = 1.65
DEFAULT_CHUNK = 2048


class InsufficientSamples(ValueError):
    pass


class TolUnreachable(RuntimeError):
    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


def sample_stats(values) -> tuple[float, float]:
    """Sample mean and (population) standard deviation.

    The variance is computed about the first sample to limit cancellation,
    and clamped at zero.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {v.size}")
    shift = v[0]
    d = v - shift
    m = math.fsum(d) / v.size
    var = math.fsum(d * d) / v.size - m * m
    return shift + m, math.sqrt(max(var, 0.0))


def stat_error(std: float, M: int, c0: float = DEFAULT_C0) -> float:
    return c0 * std / math.sqrt(M)


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    std: float
    stat_error: float
    M: int  # simulated paths, antithetic mirrors included
    n_samples: int  # independent samples entering the statistics
    c0: float
    seed: int
    scheme: str
    antithetic: bool


def _chunks(total: int, size: int):
    return [(s, min(size, total - s)) for s in range(0, total, size)]


def map_chunks(fn, total: int, chunk: int, workers: int):
    """Apply ``fn(start, count)`` over contiguous chunks, results in chunk order."""
    parts = _chunks(total, chunk)
    if workers <= 1 or len(parts) <= 1:
        return [fn(s, c) for s, c in parts]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda sc: fn(*sc), parts))


def sample_payoffs(model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule, scheme: str,
                   n_samples: int, seed: int, antithetic: bool = False, first_path: int = 0,
                   workers: int = 1, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Per-sample payoff values; with ``antithetic`` each sample is a pair mean."""
    coef = scheme_coefficients(model, grid, scheme)
    f0q = quad_f0(model, grid, rule)

    def run(start, count):
        incs = stream_batch(seed, first_path + start, count, grid, model.J)
        v = payoff_value(simulate(model, grid, incs.dW, scheme, payoff, coef=coef), model, grid, rule, payoff, f0q)
        if antithetic:
            vm = payoff_value(simulate(model, grid, -incs.dW, scheme, payoff, coef=coef), model, grid, rule, payoff, f0q)
            v = 0.5 * (v + vm)
        return v

    return np.concatenate(map_chunks(run, n_samples, chunk, workers))


def price(model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule, scheme: str = "efd",
          M: int = 1000, seed: int = 0, antithetic: bool = False, c0: float = DEFAULT_C0,
          workers: int = 1, first_path: int = 0, chunk: int = DEFAULT_CHUNK) -> PriceEstimate:
    """Sample average of the discrete payoff over ``M`` paths.

    With ``antithetic`` the ``M`` paths form ``M/2`` mirrored pairs sharing a
    path id, and the pair mean is one sample.
    """
    if antithetic and M % 2:
        raise ValueError("M must be even for antithetic sampling")
    n = M // 2 if antithetic else M
    vals = sample_payoffs(model, payoff, grid, rule, scheme, n, seed, antithetic, first_path, workers, chunk)
    mean, std = sample_stats(vals)
    return PriceEstimate(mean, std, stat_error(std, n, c0), M, n, c0, seed, scheme, antithetic)


def adaptive_price(model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule, scheme: str,
                   tol_stat: float, M0: int, M_max: int, seed: int = 0, c0: float = DEFAULT_C0,
                   antithetic: bool = False, workers: int = 1) -> PriceEstimate:
    """Double ``M`` from ``M0`` until the statistical bound is below ``tol_stat``.

    Each round uses fresh path ids following those already consumed.
    """
    if tol_stat <= 0:
        raise ValueError("tol_stat must be positive")
    M, used = M0, 0
    while True:
        est = price(model, payoff, grid, rule, scheme, M, seed, antithetic, c0, workers, first_path=used)
        used += est.n_samples
        if est.stat_error <= tol_stat:
            return est
        if 2 * M > M_max:
            raise TolUnreachable(f"stat error {est.stat_error:.3g} > {tol_stat:.3g} at M={M}", est)
        M *= 2
