"""Multi-asset Black-Scholes model: parameters, basket payoffs, lattices.

The reference pricers here (1-D CRR, the recombining Ekvall lattice and the
geometric-mean reduction) supply the benchmarks the regression-based
pricers are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DimensionMismatch, DimensionTooLarge
from .linalg import cholesky_lower

MAX_TREE_DIM = 20
MAX_MATERIALIZED_DIM = 12
MAX_EKVALL_DIM = 5
MAX_LATTICE_NODES = 60_000_000

PAYOFF_KINDS = ("geo-put", "ari-put", "call-max")


@dataclass(frozen=True, eq=False)
class BsParams:
    """Spot vector, rate, volatilities and correlation of a d-asset basket."""

    spot: np.ndarray
    rate: float
    vols: np.ndarray
    corr: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        spot = np.atleast_1d(np.asarray(self.spot, dtype=float))
        vols = np.atleast_1d(np.asarray(self.vols, dtype=float))
        corr = np.atleast_2d(np.asarray(self.corr, dtype=float))
        d = spot.shape[0]
        if d < 1 or vols.shape != (d,) or corr.shape != (d, d):
            raise DimensionMismatch(
                f"spot {spot.shape}, vols {vols.shape} and corr {corr.shape} disagree"
            )
        if np.any(spot <= 0):
            raise ValueError("spot prices must be positive")
        if np.any(vols < 0):
            raise ValueError("volatilities must be non-negative")
        if not np.allclose(corr, corr.T, atol=1e-14) or not np.allclose(np.diag(corr), 1.0):
            raise ValueError("correlation matrix must be symmetric with unit diagonal")
        if np.any(np.abs(corr) > 1.0 + 1e-14):
            raise ValueError("correlations must lie in [-1, 1]")
        corr = 0.5 * (corr + corr.T)
        for name, value in (("spot", spot), ("vols", vols), ("corr", corr)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "rate", float(self.rate))
        chol = _correlation_root(corr)
        chol.setflags(write=False)
        object.__setattr__(self, "chol", chol)

    @classmethod
    def equicorrelated(cls, d: int, spot=100.0, rate=0.05, vol=0.2, rho=0.2) -> "BsParams":
        corr = np.full((d, d), float(rho))
        np.fill_diagonal(corr, 1.0)
        return cls(np.full(d, float(spot)), rate, np.full(d, float(vol)), corr)

    @property
    def d(self) -> int:
        return self.spot.shape[0]

    def log_drift(self, dt: float) -> np.ndarray:
        """Per-asset ``(r - sigma_i^2/2) dt``."""
        return (self.rate - 0.5 * self.vols**2) * dt

    def log_increment_cov(self, dt: float) -> np.ndarray:
        """Covariance of the log-increments over ``dt``: ``rho_ij s_i s_j dt``."""
        return self.corr * np.outer(self.vols, self.vols) * dt


def _correlation_root(corr: np.ndarray) -> np.ndarray:
    # Perfect correlation is a valid model but not positive definite; fall back
    # to a symmetric PSD root so the diffusion stays well defined.
    try:
        return cholesky_lower(corr)
    except ValueError:
        w, v = np.linalg.eigh(corr)
        if w.min() < -1e-10:
            raise
        return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class Payoff:
    kind: str
    strike: float

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}; expected one of {PAYOFF_KINDS}")
        if not self.strike > 0:
            raise ValueError("strike must be positive")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return payoff_eval(self, s)


def payoff_eval(p: Payoff, s: np.ndarray) -> np.ndarray:
    """Exercise value; ``s`` holds prices along its last axis."""
    s = np.asarray(s, dtype=float)
    if p.kind == "geo-put":
        return np.maximum(p.strike - np.exp(np.mean(np.log(s), axis=-1)), 0.0)
    if p.kind == "ari-put":
        return np.maximum(p.strike - np.mean(s, axis=-1), 0.0)
    return np.maximum(np.max(s, axis=-1) - p.strike, 0.0)


def ekvall_signs(d: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``k = start..stop-1`` of the {-1,+1}^d enumeration.

    Row k is the binary expansion of k with the most significant bit on asset 1,
    mapped 0 -> -1 and 1 -> +1.
    """
    stop = 2**d if stop is None else stop
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (k >> np.arange(d - 1, -1, -1, dtype=np.int64)) & 1
    return 2.0 * bits - 1.0


def ekvall_log_shifts(
    params: BsParams, dt: float, block_size: int = 1 << 14
) -> Iterator[np.ndarray]:
    """Stream the 2^d log-moves of one Ekvall step in blocks of rows."""
    d = params.d
    if d > MAX_TREE_DIM:
        raise DimensionTooLarge(f"Ekvall step limited to d <= {MAX_TREE_DIM}, got {d}")
    scale = params.vols * np.sqrt(dt)
    drift = params.log_drift(dt)
    n = 2**d
    for start in range(0, n, block_size):
        g = ekvall_signs(d, start, min(n, start + block_size))
        yield drift + scale * (g @ params.chol.T)


def ekvall_children(params: BsParams, x: np.ndarray, dt: float) -> np.ndarray:
    """All 2^d equally likely successors of the price vector ``x``.

    Materializes a (2^d, d) array, so it is restricted to d <= 12; pricers
    stream the moves through :func:`ekvall_log_shifts` instead.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,):
        raise DimensionMismatch(f"expected a price vector of length {params.d}")
    if params.d > MAX_TREE_DIM:
        raise DimensionTooLarge(f"Ekvall step limited to d <= {MAX_TREE_DIM}, got {params.d}")
    if params.d > MAX_MATERIALIZED_DIM:
        raise DimensionTooLarge(
            f"refusing to materialize 2^{params.d} children; stream with ekvall_log_shifts"
        )
    shifts = np.concatenate(list(ekvall_log_shifts(params, dt)))
    return x * np.exp(shifts)


def crr_american_price_1d(
    spot: float,
    rate: float,
    vol: float,
    strike: float,
    maturity: float,
    steps: int,
    payoff_1d: str = "put",
    dividend: float = 0.0,
    n_exercise: int | None = None,
) -> float:
    """Cox-Ross-Rubinstein price of a put or call.

    ``n_exercise=None`` allows exercise at every step (American),
    ``n_exercise=0`` gives the European price and a positive value restricts
    exercise to that many equally spaced dates (``steps`` must be a multiple).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if payoff_1d not in ("put", "call"):
        raise ValueError("payoff_1d must be 'put' or 'call'")
    if n_exercise:
        if steps % n_exercise:
            raise ValueError("steps must be a multiple of n_exercise")
        every = steps // n_exercise
    else:
        every = 1
    sign = -1.0 if payoff_1d == "put" else 1.0
    dt = maturity / steps
    disc = np.exp(-rate * dt)

    if vol == 0.0:
        # Degenerate lattice: a single deterministic path.
        path = spot * np.exp((rate - dividend) * dt * np.arange(steps + 1))
        value = max(sign * (path[-1] - strike), 0.0)
        for n in range(steps - 1, -1, -1):
            value *= disc
            if n_exercise != 0 and n % every == 0:
                value = max(value, sign * (path[n] - strike))
        return float(value)

    up = np.exp(vol * np.sqrt(dt))
    q = (np.exp((rate - dividend) * dt) - 1.0 / up) / (up - 1.0 / up)
    j = np.arange(steps + 1)
    value = np.maximum(sign * (spot * up ** (2 * j - steps) - strike), 0.0)
    for n in range(steps - 1, -1, -1):
        value = disc * (q * value[1:] + (1.0 - q) * value[:-1])
        if n_exercise != 0 and n % every == 0:
            j = np.arange(n + 1)
            value = np.maximum(value, sign * (spot * up ** (2 * j - n) - strike))
    return float(value[0])


def geometric_reduction(params: BsParams) -> tuple[float, float, float]:
    """(spot, vol, dividend yield) of the 1-D GBM followed by the geometric mean.

    log G = mean_i log S_i has drift ``r - mean(sigma^2)/2`` and variance rate
    ``sum_ij rho_ij s_i s_j / d^2``, so G is a GBM with dividend yield
    ``mean(sigma^2)/2 - vol_eff^2/2``.
    """
    d = params.d
    eff_var = float(np.sum(params.log_increment_cov(1.0))) / d**2
    eff_vol = np.sqrt(max(eff_var, 0.0))
    eff_spot = float(np.exp(np.mean(np.log(params.spot))))
    eff_div = 0.5 * float(np.mean(params.vols**2)) - 0.5 * eff_var
    return eff_spot, float(eff_vol), eff_div


def geometric_benchmark(
    params: BsParams, strike: float, maturity: float, steps: int = 1000, n_exercise: int | None = None
) -> float:
    """Geometric basket put priced through the 1-D reduction and CRR."""
    s, v, q = geometric_reduction(params)
    return crr_american_price_1d(s, params.rate, v, strike, maturity, steps, "put", q, n_exercise)


def ekvall_tree_price(
    params: BsParams,
    payoff: Payoff,
    maturity: float,
    steps: int,
    exercise_dates: int | None = None,
) -> float:
    """Price on the full d-dimensional Ekvall lattice.

    In log-space a node is fixed by the number of up-moves per asset, so the
    lattice recombines into ``(n+1)^d`` nodes at step n and the 2^d-point
    average factorizes into one pairwise average per axis. Exercise happens
    only on ``exercise_dates`` equally spaced dates (every step if None).
    """
    d = params.d
    if d > MAX_EKVALL_DIM:
        raise DimensionTooLarge(f"Ekvall lattice limited to d <= {MAX_EKVALL_DIM}, got {d}")
    if float(steps + 1) ** d > MAX_LATTICE_NODES:
        raise DimensionTooLarge(
            f"{steps + 1}^{d} lattice nodes exceed the memory budget of {MAX_LATTICE_NODES}"
        )
    if exercise_dates:
        if steps % exercise_dates:
            raise ValueError("steps must be a multiple of exercise_dates")
        every = steps // exercise_dates
    else:
        every = 1
    dt = maturity / steps
    disc = np.exp(-params.rate * dt)
    scale = params.vols * np.sqrt(dt)
    log_s0 = np.log(params.spot)
    drift = params.log_drift(dt)

    def prices(n: int) -> np.ndarray:
        # Axis j counts the up-moves of the j-th independent factor.
        sums = np.stack(np.meshgrid(*([2.0 * np.arange(n + 1) - n] * d), indexing="ij"), axis=-1)
        return np.exp(log_s0 + n * drift + scale * (sums @ params.chol.T))

    value = payoff(prices(steps))
    for n in range(steps - 1, -1, -1):
        for axis in range(d):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            value = 0.5 * (value[tuple(lo)] + value[tuple(hi)])
        value *= disc
        if n % every == 0:
            value = np.maximum(value, payoff(prices(n)))
    return float(value.reshape(-1)[0])
