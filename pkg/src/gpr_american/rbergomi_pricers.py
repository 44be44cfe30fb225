"""American puts under rough Bergomi: GPR-Tree and GPR-EI.

Both pricers simulate P paths once and walk backward over the grid. The
model is not Markovian, so the regression inputs are a window of the most
recent ``J+1`` observed (log S, log V) pairs, interleaved oldest first:

    (log S_a, log V_a, log S_{a+1}, log V_{a+1}, ..., log S_n, log V_n)

with ``a = max(1, n - J)``. Date 0 is deterministic and never a predictor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import gpr
from .errors import ConfigInvalid, NotPositiveDefinite, TreeTooDeep
from .report import PriceReport, step_summary
from .rbergomi import RbCovariance, RbParams, RbPathSet, alfonsi_nodes, rb_covariance, rb_simulate

MAX_TREE_BLOCK = 3
_LEAF_ROWS = 1 << 18


@dataclass(frozen=True)
class RbPriceConfig:
    n_steps: int
    p_count: int
    strike: float
    j: int = 0
    tree_block: int = 2
    seed: int = 0
    maturity: float = 1.0
    max_fit_points: int | None = 500
    fit_noise: bool = True

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigInvalid("n_steps must be >= 1")
        if self.p_count < 2:
            raise ConfigInvalid("p_count must be >= 2")
        if self.j < 0:
            raise ConfigInvalid("history depth J must be >= 0")
        if not self.strike > 0:
            raise ConfigInvalid("strike must be positive")
        if self.tree_block < 1:
            raise ConfigInvalid("tree block m must be >= 1")
        if not self.maturity > 0:
            raise ConfigInvalid("maturity must be positive")


def put_payoff(strike: float, s):
    return np.maximum(strike - np.asarray(s, dtype=float), 0.0)


@dataclass(frozen=True)
class HistoryWindow:
    """Which dates feed the regression at step n, given the depth J."""

    j: int

    def dates(self, n: int) -> range:
        if n < 1:
            return range(0)
        return range(max(1, n - self.j), n + 1)

    def dim(self, n: int) -> int:
        return 2 * min(n, self.j + 1)

    def predictors(self, paths: RbPathSet, n: int) -> np.ndarray:
        """Interleaved log window at date n, one row per path."""
        idx = np.array(self.dates(n))
        out = np.empty((paths.p_count, 2 * idx.size))
        out[:, 0::2] = np.log(paths.s[:, idx])
        out[:, 1::2] = np.log(paths.v[:, idx])
        return out


# ---------------------------------------------------------------------------
# GPR-Tree


def _child_table(depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Alfonsi values of the 2*depth future coordinates for every node, and node weights.

    Node ``i`` at depth ``k+1`` is child ``i % 16`` of node ``i // 16`` at depth
    k; within a step the price coordinate varies slowest.
    """
    alf = alfonsi_nodes()
    a, b = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    pair = np.stack((alf.support[a.ravel()], alf.support[b.ravel()]), axis=1)
    w16 = (alf.probs[:, None] * alf.probs[None, :]).ravel()
    coords = np.zeros((1, 0))
    for _ in range(depth):
        coords = np.concatenate(
            (np.repeat(coords, 16, axis=0), np.tile(pair, (coords.shape[0], 1))), axis=1
        )
    return coords, w16


def quadrinomial_continuation(
    params: RbParams,
    cov: RbCovariance,
    k0: int,
    m: int,
    strike: float,
    s0: np.ndarray,
    v0: np.ndarray,
    g_past: np.ndarray,
    terminal_value,
) -> np.ndarray:
    """Discounted value of an m-step, 16-fold branching tree rooted at date ``k0``.

    ``s0``, ``v0`` (shape (B,)) are the root states of B paths and ``g_past``
    (shape (B, 2*k0)) the Gaussians already drawn along them. Every future
    coordinate takes the four Alfonsi values. ``terminal_value`` receives the
    leaf log prices and log variances as lists indexed by depth 1..m (arrays of
    shape (B, 16^m)) and returns leaf values of that shape. Interior nodes
    allow exercise; the root returns the continuation only.
    """
    if m > MAX_TREE_BLOCK:
        raise TreeTooDeep(f"tree blocks are limited to m <= {MAX_TREE_BLOCK}, got {m}")
    if m < 1:
        raise ValueError("m must be >= 1")
    if k0 + m > cov.n_steps:
        raise ValueError("tree block runs past maturity")
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    g_past = np.asarray(g_past, dtype=float).reshape(s0.shape[0], 2 * k0)
    dt = cov.dt
    t = cov.times
    lam = cov.lam
    h2 = 2.0 * cov.hurst
    coords_all, w16 = _child_table(m)
    lo = 2 * k0

    log_s = [np.log(s0)[:, None]]
    log_v = [np.log(v0)[:, None]]
    for step in range(m):
        k = k0 + step
        coords = coords_all[:: 16 ** (m - step - 1), : 2 * step + 2]
        hi = 2 * k + 2
        past_w = g_past @ lam[2 * k, :lo]
        past_f = g_past @ lam[2 * k + 1, :lo]
        fut_w = coords @ lam[2 * k, lo:hi]
        fut_f = coords @ lam[2 * k + 1, lo:hi]
        prev_s = np.repeat(log_s[-1], 16, axis=1)
        prev_v = np.exp(np.repeat(log_v[-1], 16, axis=1))
        dw = past_w[:, None] + fut_w[None, :]
        log_s.append(prev_s + (params.r - 0.5 * prev_v) * dt + np.sqrt(prev_v) * dw)
        log_v.append(
            np.log(params.xi0)
            - 0.5 * params.eta**2 * t[k + 1] ** h2
            + params.eta * (past_f[:, None] + fut_f[None, :])
        )

    disc = np.exp(-params.r * dt)
    value = np.asarray(terminal_value(log_s[1:], log_v[1:]), dtype=float)
    for depth in range(m - 1, -1, -1):
        b = value.shape[0]
        value = disc * (value.reshape(b, -1, 16) @ w16)
        if depth > 0:
            value = np.maximum(value, put_payoff(strike, np.exp(log_s[depth])))
    return value[:, 0]


def _leaf_window(paths_ls, paths_lv, leaf_ls, leaf_lv, k0, m, window: HistoryWindow):
    """Regression inputs at date k0+m for every leaf: observed past, then tree dates."""
    dates = window.dates(k0 + m)
    b, n_leaf = leaf_ls[-1].shape
    out = np.empty((b, n_leaf, 2 * len(dates)))
    for col, date in enumerate(dates):
        depth = date - k0
        if depth <= 0:
            out[:, :, 2 * col] = paths_ls[:, date, None]
            out[:, :, 2 * col + 1] = paths_lv[:, date, None]
        else:
            rep = n_leaf // leaf_ls[depth - 1].shape[1]
            out[:, :, 2 * col] = np.repeat(leaf_ls[depth - 1], rep, axis=1)
            out[:, :, 2 * col + 1] = np.repeat(leaf_lv[depth - 1], rep, axis=1)
    return out.reshape(b * n_leaf, -1)


def price_rb_gpr_tree(params: RbParams, cfg: RbPriceConfig) -> PriceReport:
    """Blocks of m quadrinomial steps, with an ARD surrogate at every block date."""
    m = cfg.tree_block
    if m > MAX_TREE_BLOCK:
        raise TreeTooDeep(f"tree blocks are limited to m <= {MAX_TREE_BLOCK}, got {m}")
    if cfg.n_steps % m:
        raise ConfigInvalid(f"tree block m={m} must divide n_steps={cfg.n_steps}")
    t_start = time.perf_counter()
    cov = rb_covariance(cfg.n_steps, cfg.maturity, params.hurst, params.rho)
    paths = rb_simulate(params, cov, cfg.p_count, cfg.seed)
    window = HistoryWindow(cfg.j)
    ls_all, lv_all = np.log(paths.s), np.log(paths.v)
    n_leaf = 16**m
    chunk = max(1, _LEAF_ROWS // n_leaf)

    model = None
    kernel, noise = None, None
    per_step = []
    n = cfg.n_steps
    for k0 in range(n - m, 0, -m):

        def terminal(leaf_ls, leaf_lv, rows, k0=k0, model=model):
            if model is None:
                return put_payoff(cfg.strike, np.exp(leaf_ls[-1]))
            x = _leaf_window(ls_all[rows], lv_all[rows], leaf_ls, leaf_lv, k0, m, window)
            return gpr.predict(model, x).reshape(leaf_ls[-1].shape)

        cont = np.empty(cfg.p_count)
        for lo in range(0, cfg.p_count, chunk):
            rows = slice(lo, min(cfg.p_count, lo + chunk))
            cont[rows] = quadrinomial_continuation(
                params, cov, k0, m, cfg.strike,
                paths.s[rows, k0], paths.v[rows, k0], paths.g[rows, : 2 * k0],
                lambda a, b, rows=rows: terminal(a, b, rows),
            )
        values = np.maximum(put_payoff(cfg.strike, paths.s[:, k0]), cont)
        model = gpr.fit(
            window.predictors(paths, k0), values, "ard",
            init=kernel, max_fit_points=cfg.max_fit_points,
            fit_noise=cfg.fit_noise, init_noise=noise,
        )
        kernel, noise = model.kernel, model.noise_var
        per_step.append(step_summary(k0, model))

    def root_terminal(leaf_ls, leaf_lv):
        if model is None:
            return put_payoff(cfg.strike, np.exp(leaf_ls[-1]))
        empty = np.zeros((1, n + 1))
        x = _leaf_window(empty, empty, leaf_ls, leaf_lv, 0, m, window)
        return gpr.predict(model, x).reshape(leaf_ls[-1].shape)

    cont0 = quadrinomial_continuation(
        params, cov, 0, m, cfg.strike,
        np.array([params.s0]), np.array([params.xi0]), np.zeros((1, 0)), root_terminal,
    )[0]
    price = max(float(put_payoff(cfg.strike, params.s0)), float(cont0))
    return PriceReport("gpr-tree", price, time.perf_counter() - t_start, per_step=per_step)


# ---------------------------------------------------------------------------
# GPR-EI


def prop2_value(
    surrogate: gpr.GprModel,
    s_prev: np.ndarray,
    v_prev: np.ndarray,
    dt: float,
    r: float,
    strike: float,
) -> np.ndarray:
    """Value one step before maturity from a 1-D SE surrogate of the payoff in log S.

    Given the state, log S at maturity is normal with mean
    ``log S + (r - V/2) dt`` and variance ``V dt``; its expectation against
    the SE kernel is again Gaussian in the training inputs.
    """
    if surrogate.kernel.kind != "se" or surrogate.dim != 1:
        raise ValueError("expected a one-dimensional SE surrogate")
    s_prev = np.atleast_1d(np.asarray(s_prev, dtype=float))
    v_prev = np.atleast_1d(np.asarray(v_prev, dtype=float))
    sf = surrogate.kernel.signal_std
    sl = surrogate.kernel.length_scales[0]
    mu = np.log(s_prev) + (r - 0.5 * v_prev) * dt
    var = v_prev * dt
    tot = var + sl**2
    xq = surrogate.train_x[:, 0]
    diff = xq[None, :] - mu[:, None]
    kern = sf**2 * sl / np.sqrt(tot)[:, None] * np.exp(-0.5 * diff**2 / tot[:, None])
    cont = np.exp(-r * dt) * (surrogate.mean + kern @ surrogate.weights)
    return np.maximum(put_payoff(strike, s_prev), cont)


def conditional_moments(
    params: RbParams, cov: RbCovariance, n: int, s_n: np.ndarray, v_n: np.ndarray, g_past: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean (B, 2) and covariance (B, 2, 2) of (log S, log V) at t_{n+1} given the path to t_n.

    Coordinates past 2n are unknown and set to zero in the mean; the covariance
    is the symmetric one implied by the last two rows of the factor.
    """
    s_n = np.atleast_1d(np.asarray(s_n, dtype=float))
    v_n = np.atleast_1d(np.asarray(v_n, dtype=float))
    g_past = np.asarray(g_past, dtype=float).reshape(s_n.shape[0], 2 * n)
    lam = cov.lam
    dt = cov.dt
    eta = params.eta
    t_next = cov.times[n + 1]
    mean = np.empty((s_n.shape[0], 2))
    mean[:, 0] = np.log(s_n) + (params.r - 0.5 * v_n) * dt
    mean[:, 1] = (
        np.log(params.xi0)
        + eta * (g_past @ lam[2 * n + 1, : 2 * n])
        - 0.5 * eta**2 * t_next ** (2.0 * cov.hurst)
    )
    l_ww = lam[2 * n, 2 * n]
    l_fw = lam[2 * n + 1, 2 * n]
    l_ff = lam[2 * n + 1, 2 * n + 1]
    sig = np.empty((s_n.shape[0], 2, 2))
    sig[:, 0, 0] = v_n * l_ww**2
    sig[:, 0, 1] = sig[:, 1, 0] = eta * np.sqrt(v_n) * l_ww * l_fw
    sig[:, 1, 1] = eta**2 * (l_ff**2 + l_fw**2)
    return mean, sig


def prop3_value(
    surrogate: gpr.GprModel,
    lagged: np.ndarray,
    mean: np.ndarray,
    sig: np.ndarray,
    s_n: np.ndarray,
    dt: float,
    r: float,
    strike: float,
) -> np.ndarray:
    """Value at t_n from an ARD surrogate over the window ending at t_{n+1}.

    ``lagged`` holds each target's already observed window coordinates (the
    surrogate's inputs minus the newest pair); ``mean``/``sig`` are the
    conditional moments of the newest pair. The lagged part enters through a
    plain kernel factor h, the newest pair through a bivariate convolution f.
    """
    if surrogate.kernel.kind != "ard":
        raise ValueError("expected an ARD surrogate")
    d = surrogate.dim
    ls = surrogate.kernel.length_scales
    lagged = np.asarray(lagged, dtype=float).reshape(mean.shape[0], d - 2)
    xq = surrogate.train_x
    if d > 2:
        a = lagged / ls[: d - 2]
        b = xq[:, : d - 2] / ls[: d - 2]
        log_h = -0.5 * gpr._sq_dist(a, b)
    else:
        log_h = np.zeros((mean.shape[0], xq.shape[0]))
    tot = sig + np.diag(ls[d - 2 :] ** 2)[None, :, :]
    det = tot[:, 0, 0] * tot[:, 1, 1] - tot[:, 0, 1] * tot[:, 1, 0]
    if np.any(~(det > 0)):
        raise NotPositiveDefinite("conditional covariance plus length scales is singular")
    inv00 = tot[:, 1, 1] / det
    inv11 = tot[:, 0, 0] / det
    inv01 = -tot[:, 0, 1] / det
    e0 = xq[None, :, d - 2] - mean[:, 0, None]
    e1 = xq[None, :, d - 1] - mean[:, 1, None]
    quad = inv00[:, None] * e0**2 + 2.0 * inv01[:, None] * e0 * e1 + inv11[:, None] * e1**2
    log_f = -0.5 * quad - 0.5 * np.log(det)[:, None]
    scale = surrogate.kernel.signal_std**2 * ls[d - 2] * ls[d - 1]
    cont = np.exp(-r * dt) * (surrogate.mean + scale * (np.exp(log_h + log_f) @ surrogate.weights))
    return np.maximum(put_payoff(strike, s_n), cont)


def price_rb_gpr_ei(params: RbParams, cfg: RbPriceConfig) -> PriceReport:
    """Closed-form one-step expectations of GPR surrogates, backward from maturity."""
    t_start = time.perf_counter()
    n_steps = cfg.n_steps
    cov = rb_covariance(n_steps, cfg.maturity, params.hurst, params.rho)
    paths = rb_simulate(params, cov, cfg.p_count, cfg.seed)
    window = HistoryWindow(cfg.j)
    dt, r, k = cov.dt, params.r, cfg.strike

    last = gpr.fit(
        np.log(paths.s[:, -1]), put_payoff(k, paths.s[:, -1]), "se",
        max_fit_points=cfg.max_fit_points, fit_noise=cfg.fit_noise,
    )
    per_step = [step_summary(n_steps, last)]
    if n_steps == 1:
        price = prop2_value(last, params.s0, params.xi0, dt, r, k)[0]
        return PriceReport("gpr-ei", price, time.perf_counter() - t_start, per_step=per_step)
    values = prop2_value(last, paths.s[:, -2], paths.v[:, -2], dt, r, k)

    kernel, noise = None, None
    for n in range(n_steps - 2, -1, -1):
        x = window.predictors(paths, n + 1)
        if kernel is not None and kernel.length_scales.size != x.shape[1]:
            kernel = None
        model = gpr.fit(
            x, values, "ard", init=kernel, max_fit_points=cfg.max_fit_points,
            fit_noise=cfg.fit_noise, init_noise=noise,
        )
        kernel, noise = model.kernel, model.noise_var
        per_step.append(step_summary(n + 1, model))
        if n == 0:
            mean, sig = conditional_moments(
                params, cov, 0, np.array([params.s0]), np.array([params.xi0]), np.zeros((1, 0))
            )
            price = prop3_value(model, np.zeros((1, 0)), mean, sig, params.s0, dt, r, k)[0]
        else:
            mean, sig = conditional_moments(
                params, cov, n, paths.s[:, n], paths.v[:, n], paths.g[:, : 2 * n]
            )
            # Everything but the newest pair of a path's own t_{n+1} window is
            # already observed at t_n.
            lagged = x[:, :-2]
            values = prop3_value(model, lagged, mean, sig, paths.s[:, n], dt, r, k)
    return PriceReport("gpr-ei", float(price), time.perf_counter() - t_start, per_step=per_step)

