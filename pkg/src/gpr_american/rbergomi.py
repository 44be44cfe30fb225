"""Rough Bergomi model: parameters, the joint Gaussian covariance, path simulation.

The simulation scheme is exact in law on the time grid for the driving
Gaussians. All Brownian increments of the price and the Riemann-Liouville
fractional Brownian motion at the grid dates form one Gaussian vector

    R = (dW_1, Wt_1, dW_2, Wt_2, ..., dW_N, Wt_N)

whose covariance is assembled below and factorized once. A path is then
``R = L @ G`` for a vector ``G`` of independent standard normals, and the
variance and price follow from an Euler step in the price.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .linalg import cholesky_lower, singular_gauss_legendre
from .sampling import gaussian_stream

log = logging.getLogger(__name__)

COV_JITTER_REL = 1e-12
COV_JITTER_ESCALATIONS = 4


@dataclass(frozen=True)
class RbParams:
    s0: float = 100.0
    r: float = 0.05
    xi0: float = 0.09
    eta: float = 1.9
    hurst: float = 0.07
    rho: float = -0.9

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError("spot must be positive")
        if not self.xi0 > 0:
            raise ValueError("forward variance xi0 must be positive")
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if not 0.0 < self.hurst < 1.0:
            raise ValueError("Hurst exponent must lie in (0, 1)")
        if not abs(self.rho) <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")


@dataclass(frozen=True, eq=False)
class RbCovariance:
    n_steps: int
    dt: float
    hurst: float
    upsilon: np.ndarray
    lam: np.ndarray
    jitter: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def price_row(self, n: int) -> np.ndarray:
        """Row of the factor producing the price increment over (t_n, t_{n+1}]."""
        return self.lam[2 * n]

    def vol_row(self, n: int) -> np.ndarray:
        """Row of the factor producing the fractional motion at t_{n+1}."""
        return self.lam[2 * n + 1]


def fbm_cross_cov(tm: float, tn: float, h: float, nodes: int = 64) -> float:
    """``Cov(Wt_{tm}, Wt_{tn})`` of the Riemann-Liouville motion for ``tm <= tn``.

    Substituting ``u = tm * s`` in the stochastic-integral representation gives

        2H tm^{2H} int_0^1 (1-s)^{H-1/2} (tn/tm - s)^{H-1/2} ds.
    """
    if tm > tn:
        tm, tn = tn, tm
    if tm <= 0.0:
        return 0.0
    if tn == tm:
        return tm ** (2.0 * h)
    c = tn / tm
    a = h - 0.5
    gap = c - 1.0

    def integrand(w):  # w = 1 - s
        return w**a * (gap + w) ** a

    if h < 0.5:
        val = singular_gauss_legendre(integrand, h + 0.5, nodes, near=gap, complement=True)
    else:
        # Nothing blows up; the substitution is only kept for its smooth Jacobian.
        val = singular_gauss_legendre(integrand, 0.5, nodes, complement=True)
    return 2.0 * h * tm ** (2.0 * h) * val


def rb_covariance(n_steps: int, maturity: float, h: float, rho: float) -> RbCovariance:
    """Covariance of the interleaved vector R and its lower Cholesky factor."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not maturity > 0:
        raise ValueError("maturity must be positive")
    if not 0.0 < h < 1.0:
        raise ValueError("Hurst exponent must lie in (0, 1)")
    dt = maturity / n_steps
    t = dt * np.arange(n_steps + 1)
    cst = 2.0 * rho * np.sqrt(2.0 * h) / (2.0 * h + 1.0)
    size = 2 * n_steps
    ups = np.zeros((size, size))
    for i in range(1, n_steps + 1):
        w_i, f_i = 2 * (i - 1), 2 * (i - 1) + 1
        ups[w_i, w_i] = dt
        ups[f_i, f_i] = t[i] ** (2.0 * h)
        for j in range(1, n_steps + 1):
            # Price increment over (t_{j-1}, t_j] against the motion at t_i.
            if j <= i:
                ups[2 * (j - 1), f_i] = cst * (
                    (t[i] - t[j - 1]) ** (h + 0.5) - (t[i] - t[j]) ** (h + 0.5)
                )
        for j in range(i + 1, n_steps + 1):
            ups[f_i, 2 * (j - 1) + 1] = fbm_cross_cov(t[i], t[j], h)
    ups = np.triu(ups) + np.triu(ups, 1).T
    lam, jitter = _factor_with_jitter(ups)
    ups.setflags(write=False)
    lam.setflags(write=False)
    return RbCovariance(n_steps, dt, h, ups, lam, jitter)


def _factor_with_jitter(ups: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        return cholesky_lower(ups), 0.0
    except NotPositiveDefinite:
        pass
    jitter = COV_JITTER_REL * float(np.max(np.diag(ups)))
    for _ in range(COV_JITTER_ESCALATIONS):
        try:
            low = cholesky_lower(ups + jitter * np.eye(ups.shape[0]))
            log.warning("rough Bergomi covariance needed a jitter of %.3g", jitter)
            return low, jitter
        except NotPositiveDefinite:
            jitter *= 10.0
    raise NotPositiveDefinite("rough Bergomi covariance is not positive definite")


@dataclass(frozen=True, eq=False)
class RbPathSet:
    s: np.ndarray
    v: np.ndarray
    g: np.ndarray

    @property
    def p_count(self) -> int:
        return self.s.shape[0]

    @property
    def n_steps(self) -> int:
        return self.s.shape[1] - 1


def paths_from_gaussians(params: RbParams, cov: RbCovariance, g: np.ndarray) -> RbPathSet:
    """Euler recursion driven by the rows of ``g`` (one path per row)."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    n = cov.n_steps
    if g.shape[1] != 2 * n:
        raise DimensionMismatch(f"need {2 * n} Gaussian coordinates per path, got {g.shape[1]}")
    r_vec = g @ cov.lam.T
    dw = r_vec[:, 0::2]
    fbm = r_vec[:, 1::2]
    t = cov.times
    p = g.shape[0]
    v = np.empty((p, n + 1))
    v[:, 0] = params.xi0
    v[:, 1:] = params.xi0 * np.exp(params.eta * fbm - 0.5 * params.eta**2 * t[1:] ** (2.0 * cov.hurst))
    log_inc = (params.r - 0.5 * v[:, :-1]) * cov.dt + np.sqrt(v[:, :-1]) * dw
    log_s = np.log(params.s0) + np.concatenate((np.zeros((p, 1)), np.cumsum(log_inc, axis=1)), axis=1)
    s = np.exp(log_s)
    s[:, 0] = params.s0
    for arr in (s, v, g):
        arr.setflags(write=False)
    return RbPathSet(s, v, g)


def rb_simulate(params: RbParams, cov: RbCovariance, p_count: int, seed: int) -> RbPathSet:
    """``p_count`` paths; path p draws its Gaussians from the stream ``(seed, p)``."""
    if p_count < 1:
        raise ValueError("p_count must be >= 1")
    g = np.stack([gaussian_stream(seed, 2 * cov.n_steps, stream=p) for p in range(p_count)])
    return paths_from_gaussians(params, cov, g)


@dataclass(frozen=True, eq=False)
class AlfonsiVar:
    support: np.ndarray
    probs: np.ndarray

    def moment(self, k: int) -> float:
        return float(np.sum(self.probs * self.support**k))


def alfonsi_nodes() -> AlfonsiVar:
    """Four-point symmetric law matching the standard normal up to the seventh moment."""
    outer = np.sqrt(3.0 + np.sqrt(6.0))
    inner = np.sqrt(3.0 - np.sqrt(6.0))
    p1 = (np.sqrt(6.0) - 2.0) / (4.0 * np.sqrt(6.0))
    p2 = 0.5 - p1
    support = np.array([outer, -outer, inner, -inner])
    probs = np.array([p1, p1, p2, p2])
    support.setflags(write=False)
    probs.setflags(write=False)
    return AlfonsiVar(support, probs)
