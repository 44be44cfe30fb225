"""GPR-Tree pricer for Bermudan basket options under multi-asset Black-Scholes.

Values live on a fixed quasi-random cloud of price vectors. Each backward step
averages the next-date value over the 2^d equally likely Ekvall successors of
every cloud point; beyond the last date that value is a GPR surrogate fitted
on the cloud.
"""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import gpr
from .bs_model import MAX_TREE_DIM, BsParams, Payoff, ekvall_log_shifts
from .errors import DimensionTooLarge
from .report import PriceReport, step_summary
from .sampling import DEFAULT_SKIP, build_state_cloud

_ROWS_PER_BLOCK = 1 << 17


class Standardizer:
    """Affine map of each coordinate to zero mean and unit variance over the cloud."""

    def __init__(self, points: np.ndarray):
        self.center = points.mean(axis=0)
        sd = points.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale


def tree_expectation(
    params: BsParams, points: np.ndarray, dt: float, value: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Arithmetic mean of ``value`` over the Ekvall successors of each row of ``points``.

    Successors are generated block by block and summed in a fixed order, so the
    result does not depend on the block size.
    """
    points = np.atleast_2d(points)
    n_pts, d = points.shape
    block = max(1, _ROWS_PER_BLOCK // n_pts)
    total = np.zeros(n_pts)
    for shifts in ekvall_log_shifts(params, dt, block_size=block):
        children = points[:, None, :] * np.exp(shifts)[None, :, :]
        vals = value(children.reshape(-1, d)).reshape(n_pts, shifts.shape[0])
        total += vals.sum(axis=1)
    return total / 2.0**d


def gpr_tree_step(
    params: BsParams,
    points: np.ndarray,
    surrogate: Callable[[np.ndarray], np.ndarray],
    dt: float,
    payoff: Payoff,
) -> np.ndarray:
    """``max(exercise, e^{-r dt} * mean of surrogate over successors)`` at each point."""
    cont = np.exp(-params.rate * dt) * tree_expectation(params, points, dt, surrogate)
    return np.maximum(payoff(points), cont)


def price_gpr_tree_bs(
    params: BsParams,
    payoff: Payoff,
    maturity: float,
    n_steps: int,
    p_count: int,
    skip: int = DEFAULT_SKIP,
    max_fit_points: int | None = 500,
    bermudan: bool = True,
    fit_noise: bool = True,
) -> PriceReport:
    """Backward induction on the cloud with one Ekvall step per exercise date.

    The last step before maturity averages the payoff itself; earlier steps
    average an SE surrogate fitted on standardized cloud coordinates. The
    price is one more tree step taken from the spot. ``bermudan=False``
    disables exercise before maturity (European value from the same pipeline).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if params.d > MAX_TREE_DIM:
        raise DimensionTooLarge(f"GPR-Tree limited to d <= {MAX_TREE_DIM}, got {params.d}")
    t0 = time.perf_counter()
    dt = maturity / n_steps
    disc = np.exp(-params.rate * dt)
    spot = params.spot[None, :]

    def exercise(x):
        return payoff(x) if bermudan else np.zeros(x.shape[0])

    if n_steps == 1:
        cont = disc * tree_expectation(params, spot, dt, payoff)[0]
        price = max(float(exercise(spot)[0]), cont)
        return PriceReport("gpr-tree", price, time.perf_counter() - t0)

    cloud = build_state_cloud(params, maturity, p_count, skip)
    x = np.asarray(cloud.points)
    std = Standardizer(x)
    z = std(x)

    values = np.maximum(exercise(x), disc * tree_expectation(params, x, dt, payoff))
    per_step = []
    kernel, noise = None, None
    for n in range(n_steps - 2, -1, -1):
        model = gpr.fit(
            z, values, "se", init=kernel, max_fit_points=max_fit_points, fit_noise=fit_noise,
            init_noise=noise,
        )
        noise = model.noise_var
        kernel = model.kernel
        per_step.append(step_summary(n + 1, model))

        def surrogate(c, model=model):
            return gpr.predict(model, std(c))

        targets = spot if n == 0 else x
        cont = disc * tree_expectation(params, targets, dt, surrogate)
        values = np.maximum(exercise(targets), cont)
    price = float(values[0])
    return PriceReport(
        "gpr-tree", price, time.perf_counter() - t0, per_step=per_step
    )
