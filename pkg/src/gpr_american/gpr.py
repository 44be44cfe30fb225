"""Gaussian process regression with squared-exponential kernels.

Only the posterior mean is needed by the pricers, so a fitted model is just
the kernel hyperparameters, the training inputs, the weight vector and the
constant the responses were centered by.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionMismatch, FitFailed, NotPositiveDefinite
from .linalg import cholesky_lower, inverse_from_cholesky, log_det_from_cholesky, psd_solve

log = logging.getLogger(__name__)

KINDS = ("se", "ard")
JITTER_REL = 1e-8
JITTER_ESCALATIONS = 4
N_STARTS = 5
BOUND_FACTOR = 1e3
NOISE_START_REL = 1e-4
_PREDICT_CHUNK = 1 << 22  # kernel entries per prediction block


@dataclass(frozen=True, eq=False)
class KernelSpec:
    kind: str
    signal_std: float
    length_scales: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kernel kind must be one of {KINDS}")
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if self.kind == "se" and ls.shape != (1,):
            raise ValueError("an SE kernel has exactly one length scale")
        if not self.signal_std > 0 or np.any(~(ls > 0)):
            raise ValueError("signal std and length scales must be positive")
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "signal_std", float(self.signal_std))

    def scales_for(self, dim: int) -> np.ndarray:
        if self.kind == "se":
            return np.full(dim, self.length_scales[0])
        if self.length_scales.shape[0] != dim:
            raise DimensionMismatch(
                f"ARD kernel has {self.length_scales.shape[0]} length scales, inputs have {dim}"
            )
        return self.length_scales


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatch(f"points of shapes {a.shape} and {b.shape}")
    ls = spec.scales_for(a.shape[0])
    return spec.signal_std**2 * float(np.exp(-0.5 * np.sum(((a - b) / ls) ** 2)))


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel values between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"inputs have {a.shape[1]} and {b.shape[1]} columns")
    ls = spec.scales_for(a.shape[1])
    return spec.signal_std**2 * np.exp(-0.5 * _sq_dist(a / ls, b / ls))


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Shifting both sets to a common center keeps the expansion below from
    # cancelling catastrophically when the points sit far from the origin.
    shift = b.mean(axis=0)
    a = a - shift
    b = b - shift
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


@dataclass(frozen=True, eq=False)
class GprModel:
    """Fitted surrogate ``y(x) = mean + sum_q k(x_q, x) w_q``."""

    kernel: KernelSpec
    train_x: np.ndarray
    weights: np.ndarray
    noise_var: float
    mean: float = 0.0
    log_likelihood: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return predict(self, x)


def predict(model: GprModel, x_star) -> np.ndarray | float:
    """Posterior mean at one point (1-D input) or at each row of a 2-D input."""
    x = np.asarray(x_star, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise DimensionMismatch(f"model has {model.dim} inputs, got {x.shape[1]}")
    out = np.empty(x.shape[0])
    step = max(1, _PREDICT_CHUNK // max(1, model.train_x.shape[0]))
    for i in range(0, x.shape[0], step):
        out[i : i + step] = kernel_matrix(model.kernel, x[i : i + step], model.train_x) @ model.weights
    out += model.mean
    return float(out[0]) if single else out


def _factor(k: np.ndarray, noise_var: float, escalate: bool = True) -> tuple[np.ndarray, float]:
    """Cholesky of ``k + noise I``, multiplying the noise by 10 on failure."""
    tries = JITTER_ESCALATIONS + 1 if escalate else 1
    noise = noise_var
    for attempt in range(tries):
        try:
            return cholesky_lower(k + noise * np.eye(k.shape[0])), noise
        except NotPositiveDefinite:
            if attempt == tries - 1:
                raise
            noise = noise * 10.0 if noise > 0 else 1e-12 * max(1.0, float(np.max(np.diag(k))))
    raise AssertionError("unreachable")


def log_marginal_likelihood(spec: KernelSpec, noise_var: float, x, y) -> float:
    """Gaussian log evidence of ``y`` under a zero-mean GP with the given kernel."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch("x and y disagree on the number of points")
    if y.shape[0] < 2:
        raise ValueError("the marginal likelihood needs at least two points")
    low, _ = _factor(kernel_matrix(spec, x, x), noise_var)
    alpha = psd_solve(low, y)
    n = y.shape[0]
    return float(-0.5 * y @ alpha - 0.5 * log_det_from_cholesky(low) - 0.5 * n * np.log(2 * np.pi))


def _lml_and_grad(theta, kind, x, y, noise_var, fit_noise=False):
    """Negative log evidence and its gradient in log-hyperparameters.

    With ``fit_noise`` the last entry of ``theta`` is the log noise std and
    ``noise_var`` is only the floor added underneath it.
    """
    sf2 = np.exp(2.0 * theta[0])
    if fit_noise:
        sn2 = np.exp(2.0 * theta[-1])
        theta_k = theta[:-1]
    else:
        sn2 = 0.0
        theta_k = theta
    ls = np.exp(theta_k[1:])
    n, d = x.shape
    if kind == "se":
        d2 = _sq_dist(x, x)
        scaled = [d2 / ls[0] ** 2]
    else:
        scaled = [(x[:, i, None] - x[None, :, i]) ** 2 / ls[i] ** 2 for i in range(d)]
    k = sf2 * np.exp(-0.5 * sum(scaled))
    try:
        low, _ = _factor(k, noise_var + sn2)
    except NotPositiveDefinite:
        return 1e25, np.zeros_like(theta)
    alpha = psd_solve(low, y)
    nll = 0.5 * y @ alpha + 0.5 * log_det_from_cholesky(low) + 0.5 * n * np.log(2 * np.pi)
    w = np.outer(alpha, alpha) - inverse_from_cholesky(low)
    grad = np.empty_like(theta)
    grad[0] = -np.sum(w * k)
    for i, s in enumerate(scaled):
        grad[i + 1] = -0.5 * np.sum(w * k * s)
    if fit_noise:
        grad[-1] = -sn2 * np.trace(w)
    return float(nll), grad


def median_length_scales(x: np.ndarray, kind: str, max_points: int = 400) -> np.ndarray:
    """Median pairwise distance (per coordinate for ARD) as a scale-free start."""
    sub = x[:: max(1, x.shape[0] // max_points)]
    iu = np.triu_indices(sub.shape[0], 1)
    if kind == "se":
        med = np.median(np.sqrt(_sq_dist(sub, sub)[iu]))
        out = np.array([med])
    else:
        out = np.array([np.median(np.abs(sub[:, i, None] - sub[None, :, i])[iu]) for i in range(x.shape[1])])
    spread = np.ptp(x, axis=0).max() if x.size else 1.0
    fallback = spread if spread > 0 else 1.0
    return np.where(out > 0, out, fallback)


def _cold_starts(theta0: np.ndarray, n_ls: int, n_starts: int) -> list:
    shifts = [0.0, np.log(0.3), np.log(3.0), np.log(0.1), np.log(10.0)]
    starts = []
    for s in shifts[: max(1, n_starts)]:
        t = theta0.copy()
        t[1 : n_ls + 1] += s
        starts.append(t)
    return starts


def fit(
    x,
    y,
    kind: str = "se",
    init: KernelSpec | None = None,
    noise_var: float | None = None,
    n_starts: int = N_STARTS,
    max_iter: int = 200,
    max_fit_points: int | None = None,
    fit_noise: bool = False,
    init_noise: float | None = None,
) -> GprModel:
    """Fit hyperparameters by maximizing the log evidence, then solve for the weights.

    Responses are centered first. Unless ``noise_var`` is given, the noise is
    a jitter of ``1e-8 * var(y)``. Starting points are the median-distance
    heuristic plus ``n_starts - 1`` rescalings of it; a warm start ``init``
    replaces all of them. Hyperparameters are bounded to a factor 1e3 either
    side of the heuristic.

    With ``max_fit_points`` set, the likelihood is maximized over the first
    ``max_fit_points`` rows only (inputs are assumed to be in exchangeable or
    low-discrepancy order); the weights always use every point.

    ``fit_noise=True`` adds a noise variance to the optimized hyperparameters
    (bounded between the jitter and ``var(y)``), which turns the interpolant
    into a smoothing regression.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch("x and y disagree on the number of points")
    if y.shape[0] < 2:
        raise FitFailed("need at least two training points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitFailed("training data contain non-finite values")
    if kind not in KINDS:
        raise ValueError(f"kernel kind must be one of {KINDS}")

    mean = float(np.mean(y))
    yc = y - mean
    var_y = float(np.var(y))
    heur = median_length_scales(x, kind)
    if max_fit_points is not None and x.shape[0] > max_fit_points:
        x_opt, y_opt = x[:max_fit_points], yc[:max_fit_points]
    else:
        x_opt, y_opt = x, yc
    if var_y == 0.0:
        spec = KernelSpec(kind, 1.0, heur)
        return GprModel(spec, x, np.zeros_like(y), 0.0, mean, info={"constant": True})
    noise = JITTER_REL * var_y if noise_var is None else float(noise_var)

    theta0 = np.concatenate(([0.5 * np.log(var_y)], np.log(heur)))
    width = np.log(BOUND_FACTOR)
    bounds = [(t - width, t + width) for t in theta0]
    n_ls = heur.size
    if fit_noise:
        theta0 = np.append(theta0, 0.5 * np.log(NOISE_START_REL * var_y))
        bounds.append((0.5 * np.log(noise), 0.5 * np.log(var_y)))
    if init is not None and init.kind == kind and init.length_scales.size == n_ls:
        start = theta0.copy()
        start[: n_ls + 1] = np.log(np.concatenate(([init.signal_std], init.length_scales)))
        if fit_noise and init_noise is not None:
            start[-1] = 0.5 * np.log(max(init_noise, noise))
        starts = [np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])]
        warm = True
    else:
        starts = _cold_starts(theta0, n_ls, n_starts)
        warm = False

    def optimize(start):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return minimize(
                _lml_and_grad,
                start,
                args=(kind, x_opt, y_opt, noise, fit_noise),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": max_iter},
            )

    best = None
    for start in starts:
        res = optimize(start)
        if np.isfinite(res.fun) and res.fun < 1e24 and (best is None or res.fun < best.fun):
            best = res
    warm_rejected = False
    if warm:
        # A warm start can slide into a poor local optimum when the responses
        # change shape between steps. If the untouched heuristic point already
        # beats it, fall back to the cold starts as well.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            f_heur = _lml_and_grad(theta0, kind, x_opt, y_opt, noise, fit_noise)[0]
        if best is None or (np.isfinite(f_heur) and f_heur < best.fun):
            warm_rejected = True
            for start in _cold_starts(theta0, n_ls, n_starts):
                res = optimize(start)
                if np.isfinite(res.fun) and res.fun < 1e24 and (best is None or res.fun < best.fun):
                    best = res
    if best is None:
        raise FitFailed("no optimizer start produced a finite likelihood")

    spec = KernelSpec(kind, float(np.exp(best.x[0])), np.exp(best.x[1 : n_ls + 1]))
    if fit_noise:
        noise = noise + float(np.exp(2.0 * best.x[-1]))
    low, used_noise = _factor(kernel_matrix(spec, x, x), noise)
    weights = psd_solve(low, yc)
    info = {"nit": int(best.nit), "starts": len(starts), "warm_rejected": warm_rejected}
    if used_noise != noise:
        info["jitter_escalated"] = used_noise
        log.warning("GPR jitter escalated from %.3g to %.3g", noise, used_noise)
    return GprModel(spec, x, weights, used_noise, mean, -float(best.fun), info)
