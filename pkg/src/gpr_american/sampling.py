"""Halton points, the quasi-random state cloud and seeded Gaussian streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .bs_model import BsParams
from .errors import OutOfRange

DEFAULT_SKIP = 20


def first_primes(n: int) -> np.ndarray:
    """The first ``n`` primes."""
    if n < 1:
        return np.zeros(0, dtype=np.int64)
    limit = max(16, int(n * (np.log(n + 1) + np.log(np.log(n + 2)))) + 10)
    while True:
        sieve = np.ones(limit + 1, dtype=bool)
        sieve[:2] = False
        for i in range(2, int(limit**0.5) + 1):
            if sieve[i]:
                sieve[i * i :: i] = False
        primes = np.flatnonzero(sieve)
        if primes.size >= n:
            return primes[:n]
        limit *= 2


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``."""
    if index < 1:
        raise ValueError("Halton index must be >= 1")
    result, f = 0.0, 1.0
    i = int(index)
    while i > 0:
        f /= base
        result += f * (i % base)
        i //= base
    return result


def halton_points(count: int, d: int, skip: int = DEFAULT_SKIP) -> np.ndarray:
    """Rows ``skip+1 .. skip+count`` of the d-dimensional Halton sequence.

    Coordinate j uses the (j+1)-th prime as base.
    """
    idx = np.arange(skip + 1, skip + count + 1, dtype=np.int64)
    out = np.zeros((count, d))
    for j, base in enumerate(first_primes(d)):
        i = idx.copy()
        f = 1.0
        while np.any(i > 0):
            f /= base
            out[:, j] += f * (i % base)
            i //= base
    return out


def normal_inv_cdf(u):
    """Standard normal quantile; rejects arguments outside (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise OutOfRange("normal quantile needs 0 < u < 1")
    out = ndtri(arr)
    return float(out) if np.ndim(u) == 0 else out


@dataclass(frozen=True, eq=False)
class StateCloud:
    points: np.ndarray
    log_points: np.ndarray

    @property
    def p_count(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def build_state_cloud(
    params: BsParams, maturity: float, p_count: int, skip: int = DEFAULT_SKIP
) -> StateCloud:
    """Quasi-random sample of S_T driven by Halton points mapped through the normal quantile."""
    if p_count < 2:
        raise ValueError("a state cloud needs at least two points")
    u = halton_points(p_count, params.d, skip)
    g = normal_inv_cdf(u)
    log_points = (
        np.log(params.spot)
        + params.log_drift(maturity)
        + params.vols * np.sqrt(maturity) * (g @ params.chol.T)
    )
    points = np.exp(log_points)
    log_points = np.log(points)
    points.setflags(write=False)
    log_points.setflags(write=False)
    return StateCloud(points, log_points)


def gaussian_stream(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """``count`` standard normals keyed by ``(seed, stream)``.

    Each key owns an independent generator, so per-path draws do not depend on
    how paths are batched or ordered.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))
    return rng.standard_normal(count)
