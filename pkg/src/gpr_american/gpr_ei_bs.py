"""GPR-EI pricer: exact Gaussian integration of an SE surrogate in log-space.

Working with ``Z_t = log S_t - (r - sigma^2/2) t`` makes the process driftless
with constant increment covariance ``Pi``. The grid built from the terminal
cloud can therefore be reused at every date, and the conditional expectation
of an SE-kernel expansion is again a sum of Gaussians:

    E[k(z_q, Z_{t+dt}) | Z_t = z] = sf^2 sl^d exp(-(z_q-z)' M^{-1} (z_q-z)/2) / sqrt(det M)

with ``M = Pi + sl^2 I``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import gpr
from .bs_model import BsParams, Payoff
from .errors import DimensionMismatch
from .linalg import cholesky_lower, log_det_from_cholesky
from .report import PriceReport, step_summary
from .sampling import DEFAULT_SKIP, StateCloud, build_state_cloud

_PAIR_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class ZGrid:
    z_points: np.ndarray
    pi: np.ndarray
    drift: np.ndarray

    @property
    def p_count(self) -> int:
        return self.z_points.shape[0]


def build_zgrid(params: BsParams, cloud: StateCloud, maturity: float, dt: float) -> ZGrid:
    drift = params.rate - 0.5 * params.vols**2
    z = cloud.log_points - drift * maturity
    z.setflags(write=False)
    pi = params.log_increment_cov(dt)
    pi.setflags(write=False)
    return ZGrid(z, pi, drift)


def exercise_price_at(z: np.ndarray, t: float, params: BsParams) -> np.ndarray:
    """Price vector represented by ``z`` at time ``t``."""
    return np.exp(np.asarray(z) + (params.rate - 0.5 * params.vols**2) * t)


def gaussian_smoothed_sum(
    train_z: np.ndarray,
    weights: np.ndarray,
    signal_std: float,
    length_scale: float,
    cov: np.ndarray,
    targets: np.ndarray,
) -> np.ndarray:
    """``sum_q w_q E[k_SE(z_q, Y)]`` for ``Y ~ N(target, cov)``, at each target row."""
    d = train_z.shape[1]
    if targets.shape[1] != d or cov.shape != (d, d):
        raise DimensionMismatch("grid, targets and covariance dimensions disagree")
    m = cov + length_scale**2 * np.eye(d)
    low = cholesky_lower(m)
    log_scale = 2.0 * np.log(signal_std) + d * np.log(length_scale) - 0.5 * log_det_from_cholesky(low)
    shift = train_z.mean(axis=0)
    wq = scipy.linalg.solve_triangular(low, (train_z - shift).T, lower=True).T
    wt = scipy.linalg.solve_triangular(low, (targets - shift).T, lower=True).T
    out = np.empty(targets.shape[0])
    step = max(1, _PAIR_CHUNK // train_z.shape[0])
    nq = np.sum(wq * wq, axis=1)
    for i in range(0, targets.shape[0], step):
        blk = wt[i : i + step]
        q = np.sum(blk * blk, axis=1)[:, None] + nq[None, :] - 2.0 * blk @ wq.T
        out[i : i + step] = np.exp(log_scale - 0.5 * np.maximum(q, 0.0)) @ weights
    return out


def ei_continuation(
    zgrid: ZGrid,
    surrogate: gpr.GprModel,
    dt: float,
    rate: float,
    targets: np.ndarray | None = None,
) -> np.ndarray:
    """Discounted expectation of the surrogate one step ahead, at each target (default: grid)."""
    if surrogate.kernel.kind != "se":
        raise ValueError("the closed-form continuation needs an SE surrogate")
    targets = zgrid.z_points if targets is None else np.atleast_2d(targets)
    smoothed = gaussian_smoothed_sum(
        surrogate.train_x,
        surrogate.weights,
        surrogate.kernel.signal_std,
        surrogate.kernel.length_scales[0],
        zgrid.pi,
        targets,
    )
    return np.exp(-rate * dt) * (surrogate.mean + smoothed)


def price_gpr_ei_bs(
    params: BsParams,
    payoff: Payoff,
    maturity: float,
    n_steps: int,
    p_count: int,
    skip: int = DEFAULT_SKIP,
    max_fit_points: int | None = 500,
    fit_noise: bool = True,
) -> PriceReport:
    """Backward induction on the fixed z-grid; the price is read off at ``log(S_0)``."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    t0 = time.perf_counter()
    dt = maturity / n_steps
    cloud = build_state_cloud(params, maturity, p_count, skip)
    grid = build_zgrid(params, cloud, maturity, dt)
    u = payoff(cloud.points)
    z_spot = np.log(params.spot)[None, :]
    per_step = []
    kernel, noise = None, None
    for n in range(n_steps - 1, -1, -1):
        model = gpr.fit(
            grid.z_points, u, "se", init=kernel, max_fit_points=max_fit_points,
            fit_noise=fit_noise, init_noise=noise,
        )
        kernel, noise = model.kernel, model.noise_var
        per_step.append(step_summary(n + 1, model))
        if n == 0:
            cont = ei_continuation(grid, model, dt, params.rate, targets=z_spot)[0]
            price = max(float(payoff(params.spot)), float(cont))
        else:
            cont = ei_continuation(grid, model, dt, params.rate)
            u = np.maximum(payoff(exercise_price_at(grid.z_points, n * dt, params)), cont)
    return PriceReport("gpr-ei", price, time.perf_counter() - t0, per_step=per_step)
