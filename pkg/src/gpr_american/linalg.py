"""Small dense linear algebra and quadrature helpers.

Matrices are plain ``numpy`` arrays. Sizes never exceed a few hundred rows
for factorizations of model covariances, and a few thousand for GPR kernel
matrices.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InvalidExponent, NotPositiveDefinite

PIVOT_RTOL = 1e-12
DEFAULT_NODES = 64


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    Raises NotPositiveDefinite when a squared pivot falls below
    ``1e-12 * max(diag(a))``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = float(np.max(np.diag(a))) if a.size else 0.0
    if scale <= 0.0:
        raise NotPositiveDefinite("matrix has no positive diagonal entry")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(low) ** 2
    if np.any(pivots < PIVOT_RTOL * scale) or not np.all(np.isfinite(low)):
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} below tolerance {PIVOT_RTOL * scale:.3e}"
        )
    return low


def psd_solve(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) x = b`` given the lower factor ``L``."""
    low = np.asarray(low, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != low.shape[0]:
        raise DimensionMismatch(f"factor is {low.shape[0]}x{low.shape[0]}, rhs has {b.shape[0]} rows")
    return scipy.linalg.cho_solve((low, True), b, check_finite=False)


def log_det_from_cholesky(low: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(low))))


def inverse_from_cholesky(low: np.ndarray) -> np.ndarray:
    """Explicit inverse of ``L L^T`` (LAPACK potri)."""
    inv, info = scipy.linalg.lapack.dpotri(low, lower=1)
    if info != 0:
        raise NotPositiveDefinite(f"potri failed with info={info}")
    inv = np.tril(inv)
    return inv + np.tril(inv, -1).T


@lru_cache(maxsize=16)
def _gauss_legendre_unit(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def singular_gauss_legendre(
    f: Callable[[np.ndarray], np.ndarray],
    h: float,
    nodes: int = DEFAULT_NODES,
    near: float | None = None,
    complement: bool = False,
) -> float:
    """Integrate ``f`` over [0, 1] when ``f(s)`` behaves like ``(1-s)**(h-1)`` at s=1.

    The substitution ``u = (1-s)**h`` turns the endpoint singularity into a
    smooth integrand, which is then handled by ``nodes``-point Gauss-Legendre.
    ``f`` must accept an array of abscissae.

    ``near`` is the distance beyond s=1 of a second singularity of ``f`` (for
    instance ``(c - s)**a`` with ``c = 1 + near``). When given, the interval is
    split into panels whose widths in ``1-s`` grow geometrically from ``near``,
    one Gauss-Legendre rule per panel.

    With ``complement=True``, ``f`` is called with ``1-s`` instead of ``s``,
    which avoids the cancellation in ``1 - s`` right next to the singularity.
    """
    if not 0.0 < h < 1.0:
        raise InvalidExponent(f"singularity exponent must lie in (0, 1), got {h}")
    u, w = _gauss_legendre_unit(int(nodes))
    if near is None or near >= 1.0:
        edges = np.array([0.0, 1.0])
    else:
        if near <= 0.0:
            raise ValueError("near must be positive")
        grid = near * 4.0 ** np.arange(int(np.ceil(np.log(1.0 / near) / np.log(4.0))))
        edges = np.concatenate(([0.0], grid[grid < 1.0] ** h, [1.0]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        uu = lo + (hi - lo) * u
        one_minus_s = uu ** (1.0 / h)
        jac = one_minus_s / (h * uu)
        vals = f(one_minus_s) if complement else f(1.0 - one_minus_s)
        total += (hi - lo) * float(np.sum(w * jac * vals))
    return total
