"""Shared numerical plumbing: reductions, quadrature nodes, constants."""

import math
from functools import lru_cache

import numpy as np

# Default tolerances; every public routine that uses one takes an override.
EPS_EIG = 0.0  # scale-relative positive-definiteness threshold (strict by default)
EPS_PSD = 1e-12  # scale-relative noise allowed on semidefinite input
EPS_DET = 1e-8  # deflation threshold on det(g_ref^-1 g)
EPS_RANGE = 1e-9  # margin inside the range of the exponential map
EPS_RT = 1e-8  # exp/log round-trip tolerance
EPS_LIN = 1e-12  # linear-algebra identities
EPS_CONV = 1e-6  # pointwise stabilisation in max-norm


def fsum(values):
    """Compensated, order-independent sum of an array (exactly rounded)."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def fsum_rows(values):
    """:func:`fsum` applied to every row of a 2-D array."""
    values = np.asarray(values, dtype=float)
    return np.array([math.fsum(row) for row in values.tolist()])


def c_const(n):
    """Constant of the small-volume distance bounds.

    Evaluates ``sqrt(n) * int_0^1 t^(n/4 - 1) dt = 4/sqrt(n)`` for n <= 3 and
    uses the cruder ``sqrt(n)`` for n >= 4 (the two agree at n = 4).
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return 4.0 / math.sqrt(n) if n <= 3 else math.sqrt(n)


c_prime = c_const


@lru_cache(maxsize=None)
def _gauss_legendre(order):
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=None)
def graded_nodes(panels=32, order=8, grading=18, u_min=1e-6):
    """Quadrature nodes/weights on [0, 1] in the time variable ``t``.

    Uses the substitution ``t = u^4 / (u^4 + (1-u)^4)``, whose derivative
    vanishes to third order at both ends.  This absorbs integrable
    ``t^(-3/4)`` endpoint singularities (paths starting on the boundary of
    the positive cone) and resolves very narrow endpoint peaks.  Panels in
    ``u`` are uniform in the bulk and geometrically graded towards 0 and 1.

    Returns
    -------
    t : ndarray
        Nodes in (0, 1).
    w : ndarray
        Weights, so that ``sum(w * f(t))`` approximates ``int_0^1 f(t) dt``.
    """
    bulk = np.linspace(0.0, 1.0, panels + 1)
    edge = np.geomspace(u_min, 1.0 / panels, grading)
    breaks = np.unique(np.concatenate([bulk, edge, 1.0 - edge, [0.0, 1.0]]))
    x, wx = _gauss_legendre(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    u = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wu = (0.5 * (b - a) * wx).ravel()
    p, q = u**4, (1.0 - u) ** 4
    den = p + q
    t = p / den
    dt = 4.0 * u**3 * (1.0 - u) ** 3 / den**2
    t.flags.writeable = False
    w = wu * dt
    w.flags.writeable = False
    return t, w


def unique_rows(x):
    """Distinct rows of a 2-D array in first-appearance order.

    Returns ``(rows, inverse, counts)`` like ``np.unique(..., axis=0)``.  Rows
    are compared bytewise through a void view, which is much faster for
    wide rows.
    """
    x = np.ascontiguousarray(x)
    keys = x.view(np.dtype((np.void, x.dtype.itemsize * x.shape[1]))).ravel()
    _, first, inverse, counts = np.unique(
        keys, return_index=True, return_inverse=True, return_counts=True
    )
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return x[first[order]], rank[inverse.ravel()], counts[order]
