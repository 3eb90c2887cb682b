"""Pointwise geometry on the cone of positive-definite symmetric tensors.

Everything here acts on a single tangent/metric value ``(n, n)`` or on a
batch ``(..., n, n)``; batch axes broadcast the NumPy way.  Functions of a
``g``-symmetric endomorphism such as ``g^-1 h`` are evaluated in the
congruence frame ``g^-1/2 h g^-1/2``, which turns them into symmetric
eigenproblems.

The pointwise Riemannian metric ``<h, k>^0_b = tr_b(hk) det(g_ref^-1 b)``
induces a distance ``theta`` with no closed form, so :func:`theta_bounds`
returns a certified interval instead of a number.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import (
    EPS_CONV,
    EPS_DET,
    EPS_EIG,
    EPS_PSD,
    EPS_RANGE,
    c_prime,
    graded_nodes,
)
from .errors import InvalidInput, NumericalFailure, OutOfDomain, OutOfRange

__all__ = [
    "SymTensorPoint",
    "PointKind",
    "PointClassification",
    "pack_sym",
    "unpack_sym",
    "sym_dim",
    "eig_extremes",
    "trace_pair",
    "inner0",
    "sqrt_det_ratio",
    "split_traceless",
    "geodesic_affine",
    "affine_distance",
    "ebin_domain_sup",
    "ebin_exp_point",
    "ebin_log_point",
    "in_log_range",
    "inner0_linear_length",
    "theta_bounds",
    "cauchy_tail_certificate",
    "classify_point_sequence",
]


# ---------------------------------------------------------------------------
# Storage helpers


def sym_dim(n):
    """Number of stored entries of a symmetric ``n x n`` tensor."""
    return n * (n + 1) // 2


def pack_sym(mat):
    """Upper triangle, row-major, of ``(..., n, n)`` -> ``(..., n(n+1)/2)``."""
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[-1]
    iu = np.triu_indices(n)
    return mat[..., iu[0], iu[1]]


def unpack_sym(entries, n):
    """Inverse of :func:`pack_sym`."""
    entries = np.asarray(entries, dtype=float)
    if entries.shape[-1] != sym_dim(n):
        raise InvalidInput(
            f"expected {sym_dim(n)} entries per tensor for n={n}, "
            f"got {entries.shape[-1]}"
        )
    out = np.zeros(entries.shape[:-1] + (n, n))
    iu = np.triu_indices(n)
    out[..., iu[0], iu[1]] = entries
    out[..., iu[1], iu[0]] = entries
    return out


@dataclass(frozen=True)
class SymTensorPoint:
    """A symmetric tensor at one point, stored as its upper triangle."""

    n: int
    entries: tuple

    def __post_init__(self):
        if not 1 <= self.n <= 4:
            raise InvalidInput("only 1 <= n <= 4 is supported")
        if len(self.entries) != sym_dim(self.n):
            raise InvalidInput("wrong number of entries")
        if not all(math.isfinite(x) for x in self.entries):
            raise InvalidInput("non-finite entry")

    @classmethod
    def from_matrix(cls, mat):
        mat = _as_sym(mat)
        if mat.ndim != 2:
            raise InvalidInput("a point is a single (n, n) matrix")
        return cls(mat.shape[0], tuple(float(x) for x in pack_sym(mat)))

    @property
    def matrix(self):
        return unpack_sym(np.array(self.entries), self.n)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    @property
    def positive_definite(self):
        return bool(_pd_mask(self.matrix, EPS_EIG))

    @property
    def positive_semidefinite(self):
        w = self.eigenvalues()
        return bool(w[0] > -EPS_PSD * max(abs(w[-1]), 1.0))


# ---------------------------------------------------------------------------
# Internal linear algebra


def _as_sym(a):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInput(f"expected (..., n, n) array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("non-finite entries")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _pd_mask(g, eps_eig):
    w = np.linalg.eigvalsh(g)
    return w[..., 0] > eps_eig * np.abs(w[..., -1])


def _require_pd(g, eps_eig=EPS_EIG, what="metric"):
    if not np.all(_pd_mask(g, eps_eig)):
        raise InvalidInput(f"{what} is not positive definite")


def _eigh(a):
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(str(exc)) from exc


def _from_eig(w, v):
    """``sum_k w_k v_k v_k^T``; ``w`` may carry extra leading (time) axes."""
    out = 0.0
    for k in range(v.shape[-1]):
        col = v[..., :, k]
        out = out + w[..., k, None, None] * (col[..., :, None] * col[..., None, :])
    return out


def _sqrt_pair(g):
    """Return ``g^(1/2)`` and ``g^(-1/2)`` for positive-definite ``g``."""
    w, v = _eigh(g)
    s = np.sqrt(w)
    return _from_eig(s, v), _from_eig(1.0 / s, v)


def _congruence(ginv_half, a):
    return ginv_half @ a @ ginv_half


def _trace(a):
    return np.trace(a, axis1=-2, axis2=-1)


def _eye_like(a):
    return np.broadcast_to(np.eye(a.shape[-1]), a.shape)


def _traceless(a_hat):
    n = a_hat.shape[-1]
    tr = _trace(a_hat)
    return a_hat - (tr / n)[..., None, None] * np.eye(n), tr


def _relative_eigs(g, a):
    """Eigenvalues of ``g^-1 a`` (real, since ``a`` is ``g``-symmetric)."""
    _, gih = _sqrt_pair(g)
    return np.linalg.eigvalsh(_congruence(gih, a))


# ---------------------------------------------------------------------------
# Elementary operations


def eig_extremes(g_ref, a, eps_eig=EPS_EIG):
    """Extreme eigenvalues of ``g_ref^-1 a``.

    Parameters
    ----------
    g_ref : ndarray, shape (..., n, n)
        Positive-definite reference tensor.
    a : ndarray, shape (..., n, n)
        Symmetric tensor.

    Returns
    -------
    lam_min, lam_max : ndarray, shape (...)
    """
    g_ref, a = _as_sym(g_ref), _as_sym(a)
    _require_pd(g_ref, eps_eig, "reference")
    w = _relative_eigs(g_ref, a)
    return w[..., 0], w[..., -1]


def trace_pair(g, h, k, eps_eig=EPS_EIG):
    """``tr_g(hk) = tr(g^-1 h g^-1 k)``."""
    g, h, k = _as_sym(g), _as_sym(h), _as_sym(k)
    _require_pd(g, eps_eig)
    _, gih = _sqrt_pair(g)
    hh, kh = _congruence(gih, h), _congruence(gih, k)
    return np.einsum("...ij,...ji->...", hh, kh)


def inner0(g_ref, base, h, k, eps_eig=EPS_EIG):
    """Pointwise scalar product ``tr_base(hk) * det(g_ref^-1 base)``."""
    g_ref, base = _as_sym(g_ref), _as_sym(base)
    _require_pd(g_ref, eps_eig, "reference")
    return trace_pair(base, h, k, eps_eig) * np.prod(
        _relative_eigs(g_ref, base), axis=-1
    )


def sqrt_det_ratio(g0, g1, eps_eig=EPS_EIG, eps_psd=EPS_PSD):
    """Density ``sqrt(det(g0^-1 g1))`` of ``mu_g1`` w.r.t. ``mu_g0``.

    ``g1`` may be semidefinite; the result is then 0 (up to rounding).
    """
    g0, g1 = _as_sym(g0), _as_sym(g1)
    _require_pd(g0, eps_eig)
    w = _relative_eigs(g0, g1)
    scale = np.maximum(np.abs(w[..., -1]), 1.0)
    if np.any(w[..., 0] < -eps_psd * scale):
        raise InvalidInput("g1 is not positive semidefinite")
    return np.sqrt(np.prod(np.clip(w, 0.0, None), axis=-1))


def split_traceless(g, h, eps_eig=EPS_EIG):
    """Split ``h = h_T + h_c`` into ``g``-traceless and pure-trace parts."""
    g, h = _as_sym(g), _as_sym(h)
    _require_pd(g, eps_eig)
    n = g.shape[-1]
    ginv_h = np.linalg.solve(g, h)
    coef = _trace(ginv_h) / n
    h_c = coef[..., None, None] * g
    return h - h_c, h_c


def geodesic_affine(g0, h, t):
    """Geodesic ``g0 exp(t g0^-1 h)`` of the affine-invariant metric ``tr_g(hk)``."""
    g0, h = _as_sym(g0), _as_sym(h)
    _require_pd(g0)
    gh, gih = _sqrt_pair(g0)
    w, v = _eigh(_congruence(gih, h))
    t = np.asarray(t, dtype=float)[..., None]
    return gh @ _from_eig(np.exp(t * w), v) @ gh


def affine_distance(a, b):
    """Affine-invariant distance ``||log(a^-1 b)||``, the metric ``d_x``."""
    a, b = _as_sym(a), _as_sym(b)
    _require_pd(a)
    _require_pd(b)
    w = _relative_eigs(a, b)
    return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# Exponential and logarithm of the L2 metric, pointwise


def _exp_data(g0, h, eps_pure):
    g0, h = _as_sym(g0), _as_sym(h)
    _require_pd(g0)
    n = g0.shape[-1]
    gh, gih = _sqrt_pair(g0)
    h_hat = _congruence(gih, h)
    ht, tr_h = _traceless(h_hat)
    norm_t = np.sqrt(np.einsum("...ij,...ij->...", ht, ht))
    scale = np.sqrt(np.einsum("...ij,...ij->...", h_hat, h_hat))
    pure = norm_t <= eps_pure * scale
    pure |= scale == 0.0
    with np.errstate(divide="ignore"):
        sup = np.where(pure & (tr_h < 0), -4.0 / np.where(tr_h < 0, tr_h, -1.0), np.inf)
    return n, gh, ht, tr_h, norm_t, pure, sup


def ebin_domain_sup(g0, h, eps_pure=1e-12):
    """Supremum of the maximal time domain of the pointwise L2 geodesic.

    ``+inf`` unless ``h`` is pure trace with negative trace, in which case
    the geodesic reaches the zero tensor at ``t = -4 / tr(g0^-1 h)``.
    """
    return _exp_data(g0, h, eps_pure)[-1]


def ebin_exp_point(g0, h, t, *, boundary=False, eps_pure=1e-12):
    """Evaluate the L2 geodesic from ``g0`` with initial velocity ``h`` at ``t``.

    With ``H = g0^-1 h``, ``q = 1 + t tr(H)/4`` and
    ``r = (t/4) sqrt(n tr(H_T^2))`` the value is
    ``(q^2 + r^2)^(2/n) g0 exp((t phi / r) H_T)`` where ``phi`` is the angle
    of ``(q, r)`` taken in ``[0, pi)``; on pure-trace points it reduces to
    ``q^(4/n) g0``.

    Parameters
    ----------
    g0, h : ndarray, shape (..., n, n)
    t : float or ndarray broadcastable against the batch shape
        Leading axes beyond the batch evaluate several times at once.  Must
        satisfy ``0 <= t < ebin_domain_sup(g0, h)``.
    boundary : bool
        Allow ``t`` equal to the domain supremum; such points return the zero
        tensor.

    Raises
    ------
    OutOfDomain
        ``t < 0`` or ``t`` past the domain supremum.
    """
    n, gh, ht, tr_h, norm_t, pure, sup = _exp_data(g0, h, eps_pure)
    t = np.asarray(t, dtype=float)
    t = np.broadcast_to(t, np.broadcast_shapes(t.shape, tr_h.shape))
    if np.any(t < 0):
        raise OutOfDomain("negative time", domain_sup=sup)
    at_sup = np.isclose(t, sup, rtol=1e-14, atol=0.0) & np.isfinite(sup)
    beyond = (t >= sup) & ~(boundary & at_sup)
    if np.any(beyond):
        idx = tuple(int(i) for i in np.argwhere(beyond)[0]) if beyond.ndim else None
        raise OutOfDomain(
            f"t outside geodesic domain (sup={np.min(sup)})", cell=idx, domain_sup=sup
        )

    q = 1.0 + 0.25 * t * tr_h
    r = np.where(pure, 0.0, 0.25 * t * math.sqrt(n) * norm_t)
    phi = np.arctan2(r, q)  # in [0, pi) since r >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(r > 0, t * phi / np.where(r > 0, r, 1.0), t / np.where(q != 0, q, 1.0))
    coef = np.where(pure, 0.0, coef)
    radial = np.where(pure, np.clip(q, 0.0, None) ** (4.0 / n), (q * q + r * r) ** (2.0 / n))
    w, v = _eigh(ht)
    # g0^(1/2) V is time independent, so each time costs one product
    b = gh @ v
    out = _from_eig(radial[..., None] * np.exp(coef[..., None] * w), b)
    if boundary:
        out = np.where(at_sup[..., None, None], 0.0, out)
    return out


def _log_frame(g0, g1):
    g0, g1 = _as_sym(g0), _as_sym(g1)
    _require_pd(g0)
    n = g0.shape[-1]
    gh, gih = _sqrt_pair(g0)
    w, v = _eigh(_congruence(gih, g1))
    if np.any(w <= 0):
        raise InvalidInput("target is not positive definite")
    lw = np.log(w)
    kd = lw - lw.mean(axis=-1, keepdims=True)
    tr_k2 = np.sum(kd * kd, axis=-1)
    return n, gh, v, lw, kd, tr_k2


def in_log_range(g0, g1, eps_range=EPS_RANGE):
    """Mask of points where ``g1`` lies in the image of the exponential at ``g0``."""
    n, _, _, _, _, tr_k2 = _log_frame(g0, g1)
    return tr_k2 < 16.0 * math.pi**2 / n - eps_range


def ebin_log_point(g0, g1, eps_range=EPS_RANGE):
    """Inverse of :func:`ebin_exp_point` at ``t = 1``.

    Requires ``tr(K^2) < 16 pi^2 / n`` with ``K`` the traceless part of
    ``log(g0^-1 g1)``.  Raises :class:`OutOfRange` otherwise.
    """
    n, gh, v, lw, kd, tr_k2 = _log_frame(g0, g1)
    bad = ~(tr_k2 < 16.0 * math.pi**2 / n - eps_range)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else None
        raise OutOfRange("target outside the range of the exponential map", cell=idx)
    phi = 0.25 * math.sqrt(n) * np.sqrt(tr_k2)
    rho = np.exp(0.25 * np.sum(lw, axis=-1))
    tr_h = 4.0 * (rho * np.cos(phi) - 1.0)
    # r / phi = rho * sin(phi) / phi, smooth through phi = 0
    coef = rho * np.sinc(phi / math.pi)
    diag = coef[..., None] * kd + (tr_h / n)[..., None]
    return gh @ _from_eig(diag, v) @ gh


# ---------------------------------------------------------------------------
# Distance bounds for theta


def _abs_line_integral(w):
    """``int_0^1 |1 + t w| dt`` for complex ``w`` (closed form)."""
    w = np.asarray(w, dtype=complex)
    aw = np.abs(w)
    safe = np.where(aw > 0, aw, 1.0)
    e = w / safe
    # coordinates of z(t) = 1 + t w along / across the line direction e
    u0 = np.real(np.conj(e))  # Re(conj(e) * 1)
    p = np.abs(np.imag(np.conj(e)))
    u1 = u0 + aw

    def prim(u):
        root = np.hypot(p, u)
        return 0.5 * (u * root + p * p * np.arcsinh(u / np.where(p > 0, p, 1.0)))

    val = (prim(u1) - prim(u0)) / safe
    return np.where(aw > 1e-12, val, 1.0 + 0.5 * np.real(w))


def _geodesic_inner0_length(g_ref, a, h):
    """``<.,.>^0``-length of the L2 geodesic from ``a`` with velocity ``h`` on [0, 1].

    Along that geodesic ``tr_{g_t}(g_t'^2) sqrt(det(a^-1 g_t))`` is constant
    and ``sqrt(det(a^-1 g_t)) = |1 + t w|^2`` with
    ``w = (tr H + i sqrt(n tr H_T^2)) / 4``, which reduces the length to a
    one-dimensional closed-form integral.
    """
    n = a.shape[-1]
    _, gih = _sqrt_pair(a)
    h_hat = _congruence(gih, h)
    ht, tr_h = _traceless(h_hat)
    c = np.einsum("...ij,...ij->...", h_hat, h_hat)
    det_a = np.prod(_relative_eigs(g_ref, a), axis=-1)
    w = 0.25 * (tr_h + 1j * np.sqrt(n * np.einsum("...ij,...ij->...", ht, ht)))
    return np.sqrt(c * det_a) * _abs_line_integral(w)


def _pencil(a, b):
    """Relative eigenvalues ``mu`` with ``a^-1/2 b a^-1/2 = V diag(1 + mu) V^T``."""
    return _relative_eigs(a, b) - 1.0


def inner0_linear_length(g_ref, a, b):
    """``<.,.>^0``-length of the straight segment ``(1-t) a + t b``.

    In the frame diagonalising the pencil ``(a, b)`` the integrand is
    ``sum_i (mu_i / (1 + t mu_i))^2 * det(g_ref^-1 a) prod_i (1 + t mu_i)``.
    """
    g_ref, a, b = _as_sym(g_ref), _as_sym(a), _as_sym(b)
    _require_pd(a)
    g_ref, a, b = np.broadcast_arrays(g_ref, a, b)
    n = a.shape[-1]
    mu = _pencil(a, b).reshape(-1, n)
    det_a = np.prod(_relative_eigs(g_ref, a), axis=-1).reshape(-1)
    t, wt = graded_nodes()
    out = np.empty(mu.shape[0])
    for lo in range(0, mu.shape[0], 2048):
        m = mu[lo : lo + 2048]
        lam = np.clip(1.0 + t[:, None] * m[:, None, :], 0.0, None)  # (batch, nodes, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            tr = np.sum((m[:, None, :] / lam) ** 2, axis=-1)
            speed2 = tr * det_a[lo : lo + 2048, None] * np.prod(lam, axis=-1)
        speed2 = np.nan_to_num(speed2, nan=0.0, posinf=0.0)
        out[lo : lo + 2048] = np.sqrt(speed2) @ wt
    return out.reshape(a.shape[:-2])


def _canonical_order(a, b):
    """Swap mask making pairwise computations exactly symmetric in (a, b)."""
    pa, pb = pack_sym(a), pack_sym(b)
    diff = pa - pb
    nz = diff != 0
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(diff, first[..., None], axis=-1)[..., 0]
    return lead > 0


def theta_bounds(
    g_ref, a, b, *, straight_line=True, refine=False, eps_range=EPS_RANGE, parts=False
):
    """Certified interval ``[lower, upper]`` containing ``theta(a, b)``.

    Lower bounds:

    * ``(2/sqrt(n)) |sqrt(det A) - sqrt(det B)|`` (``sqrt det`` is Lipschitz);
    * ``min(sqrt(n)(1 - 1/sqrt2) sqrt(delta), sqrt(delta/2) d_x(a, b))`` with
      ``delta = min(det A, det B)`` and ``d_x`` the affine distance.

    Upper bounds (the minimum is returned):

    * ``C'(n) (sqrt(det A) + sqrt(det B))`` through the zero tensor;
    * ``<.,.>^0``-length of the L2 geodesic from ``a`` to ``b`` when ``b`` is in
      the range of the logarithm at ``a``;
    * ``<.,.>^0``-length of the straight segment (``straight_line=True``);
    * path straightening over a piecewise-linear path (``refine=True``).

    Here ``A = g_ref^-1 a`` and ``B = g_ref^-1 b``.

    Returns
    -------
    lower, upper : ndarray, shape (...)
    parts : dict, only with ``parts=True``
        Every individual bound (``inf`` where not applicable).
    """
    g_ref, a, b = _as_sym(g_ref), _as_sym(a), _as_sym(b)
    _require_pd(g_ref, what="reference")
    _require_pd(a)
    _require_pd(b)
    g_ref, a, b = np.broadcast_arrays(g_ref, a, b)
    swap = _canonical_order(a, b)[..., None, None]
    a, b = np.where(swap, b, a), np.where(swap, a, b)
    n = a.shape[-1]

    det_a = np.prod(_relative_eigs(g_ref, a), axis=-1)
    det_b = np.prod(_relative_eigs(g_ref, b), axis=-1)
    sa, sb = np.sqrt(det_a), np.sqrt(det_b)
    low_lip = (2.0 / math.sqrt(n)) * np.abs(sa - sb)
    delta = np.minimum(det_a, det_b)
    low_gap = np.minimum(
        math.sqrt(n) * (1.0 - 1.0 / math.sqrt(2.0)) * np.sqrt(delta),
        np.sqrt(delta / 2.0) * affine_distance(a, b),
    )
    lower = np.maximum(low_lip, low_gap)

    upper = c_prime(n) * (sa + sb)
    info = dict(sqrt_det_gap=low_lip, affine_gap=low_gap, through_zero=upper)
    ok = in_log_range(a, b, eps_range)
    geo = np.full(upper.shape, np.inf)
    if np.any(ok):
        h = np.zeros_like(a)
        h[ok] = ebin_log_point(a[ok], b[ok], eps_range)
        geo = np.where(ok, _geodesic_inner0_length(g_ref, a, h), np.inf)
        upper = np.minimum(upper, geo)
    info["geodesic"] = geo
    if straight_line:
        info["straight_line"] = inner0_linear_length(g_ref, a, b)
        upper = np.minimum(upper, info["straight_line"])
    if refine:
        flat = upper.reshape(-1)
        gr, aa, bb = (x.reshape((-1, n, n)) for x in (g_ref, a, b))
        for i in range(flat.size):
            flat[i] = min(flat[i], _straighten(gr[i], aa[i], bb[i]))
        upper = flat.reshape(upper.shape)

    same = np.all(a == b, axis=(-1, -2))
    upper = np.where(same, 0.0, upper)
    lower = np.where(same, 0.0, lower)
    # bounds can touch (conformal pairs); absorb rounding only
    slack = 1e-10 * upper + 1e-14 * (sa + sb)
    touch = (lower > upper) & (lower - upper <= slack)
    lower = np.where(touch, upper, lower)
    if np.any(lower > upper):
        raise NumericalFailure("theta lower bound exceeds upper bound")
    if parts:
        return lower, upper, info
    return lower, upper


def _straighten(g_ref, a, b, nodes=5):
    """Shorten a piecewise-linear path from ``a`` to ``b`` by local optimisation."""
    from scipy.optimize import minimize

    n = a.shape[-1]
    gh, gih = _sqrt_pair(g_ref)
    iu = np.triu_indices(n)
    ts = np.linspace(0.0, 1.0, nodes + 2)[1:-1]
    if in_log_range(a, b):
        h = ebin_log_point(a, b)
        init = [ebin_exp_point(a, h, t) for t in ts]
    else:
        init = [(1 - t) * a + t * b for t in ts]

    def to_params(mats):
        out = []
        for m in mats:
            w, v = _eigh(_congruence(gih, m))
            out.append(pack_sym(_from_eig(np.log(w), v)))
        return np.concatenate(out)

    def to_mats(x):
        ys = unpack_sym(x.reshape(nodes, -1), n)
        w, v = _eigh(ys)
        return gh @ _from_eig(np.exp(w), v) @ gh

    x_gl, w_gl = np.polynomial.legendre.leggauss(12)
    t_gl, w_gl = 0.5 * (x_gl + 1.0), 0.5 * w_gl

    def rough_length(x):
        pts = np.concatenate([a[None], to_mats(x), b[None]])
        mu = _pencil(pts[:-1], pts[1:])
        det0 = np.prod(_relative_eigs(g_ref, pts[:-1]), axis=-1)
        lam = 1.0 + t_gl[:, None] * mu[:, None, :]
        speed2 = np.sum((mu[:, None, :] / lam) ** 2, -1) * det0[:, None] * np.prod(lam, -1)
        return float(np.sum(np.sqrt(speed2) @ w_gl))

    del iu
    res = minimize(rough_length, to_params(init), method="Nelder-Mead" if n == 1 else "BFGS")
    pts = np.concatenate([a[None], to_mats(res.x), b[None]])
    return float(np.sum(inner0_linear_length(g_ref, pts[:-1], pts[1:])))


# ---------------------------------------------------------------------------
# Cauchy certificates and the pointwise dichotomy


def _dyadic_windows(length, max_windows=4):
    """Index windows ``[N/2^(j+1), N/2^j)`` counted back from the end."""
    windows = []
    hi = length
    for _ in range(max_windows):
        lo = hi // 2
        if hi - lo < 2:
            break
        windows.append((lo, hi))
        hi = lo
    return windows


def cauchy_tail_certificate(
    step_upper, anchor_upper, *, tol_cauchy=1e-6, min_decay=0.1, max_windows=4
):
    """Finite-prefix Cauchy certificate for a sequence ``x_1, ..., x_N``.

    Parameters
    ----------
    step_upper : array, shape (N-1,)
        Upper bounds on ``dist(x_k, x_{k+1})``.
    anchor_upper : array, shape (N,)
        Numbers ``b_k`` with ``dist(x_m, x_l) <= b_m + b_l`` (distance through
        a common far point, e.g. the collapsed boundary).
    tol_cauchy : float
        Diameter below which the final window is accepted outright.
    min_decay : float
        Minimum power-law decay exponent of the window diameters.

    Returns
    -------
    dict
        ``certified`` (bool), ``windows``, ``diameter`` (upper bound on the
        diameter of each dyadic tail window, last window first), ``decay``
        (fitted exponent or None) and ``reason``.
    """
    step_upper = np.asarray(step_upper, dtype=float)
    anchor_upper = np.asarray(anchor_upper, dtype=float)
    length = anchor_upper.size
    if length == 0:
        raise InvalidInput("empty sequence")
    windows = _dyadic_windows(length, max_windows)
    if not windows:
        windows = [(0, length)]
    diam = []
    for lo, hi in windows:
        chain = float(np.sum(step_upper[lo : hi - 1]))
        through = 2.0 * float(np.max(anchor_upper[lo:hi]))
        diam.append(min(chain, through))
    diam = np.array(diam)
    decay = None
    if diam[0] <= tol_cauchy:
        certified, reason = True, "tail diameter below tolerance"
    elif len(windows) >= 2 and np.all(diam > 0):
        starts = np.array([lo + 1 for lo, _ in windows], dtype=float)
        slope = np.polyfit(np.log(starts), np.log(diam), 1)[0]
        decay = float(-slope)
        monotone = bool(np.all(diam[:-1] <= diam[1:] * (1 + 1e-12)))
        certified = decay >= min_decay and monotone
        reason = (
            f"window diameters decay like k^-{decay:.3g}"
            if certified
            else f"window diameters do not decay (exponent {decay:.3g})"
        )
    else:
        certified, reason = False, "prefix too short to establish decay"
    return {
        "certified": bool(certified),
        "windows": [list(w) for w in windows],
        "diameter": diam.tolist(),
        "decay": decay,
        "reason": reason,
        "tol_cauchy": tol_cauchy,
        "min_decay": min_decay,
    }


class PointKind(enum.Enum):
    CONVERGES = "converges"
    DEGENERATES = "degenerates"
    NOT_CAUCHY = "not_cauchy"


@dataclass
class PointClassification:
    """Outcome of :func:`classify_point_sequence` with its evidence traces."""

    kind: PointKind
    limit: np.ndarray = None
    det_trace: np.ndarray = field(default=None, repr=False)
    step_upper: np.ndarray = field(default=None, repr=False)
    certificate: dict = field(default_factory=dict, repr=False)
    notes: str = ""

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "limit": None if self.limit is None else pack_sym(self.limit).tolist(),
            "det_trace": np.asarray(self.det_trace).tolist(),
            "step_upper": np.asarray(self.step_upper).tolist(),
            "certificate": self.certificate,
            "notes": self.notes,
        }


def classify_point_sequence(
    seq,
    g_ref=None,
    *,
    eps_det=EPS_DET,
    eps_conv=EPS_CONV,
    tol_cauchy=1e-6,
    min_decay=0.1,
    straight_line=False,
):
    """Apply the converge-or-degenerate dichotomy to a finite prefix.

    The prefix is treated as theta-Cauchy when the certified diameters of its
    dyadic tail windows (see :func:`cauchy_tail_certificate`) are below
    ``tol_cauchy`` or decay at least like ``k^-min_decay``.  A certified
    sequence *degenerates* when ``det(g_ref^-1 a_k)`` drops below
    ``eps_det`` in the final window while the window maxima of the
    determinant are non-increasing, and *converges* when the entries over the
    final window spread by at most ``eps_conv``.  Anything else is reported
    as not Cauchy, with the evidence attached.

    Parameters
    ----------
    seq : array_like, shape (N, n, n)
    g_ref : array_like, shape (n, n), optional
        Reference tensor; identity by default.
    """
    seq = _as_sym(seq)
    if seq.ndim != 3 or seq.shape[0] == 0:
        raise InvalidInput("expected a nonempty (N, n, n) sequence")
    n = seq.shape[-1]
    g_ref = np.eye(n) if g_ref is None else _as_sym(g_ref)
    _require_pd(seq)

    det_trace = np.prod(_relative_eigs(g_ref, seq), axis=-1)
    if len(seq) > 1:
        _, step = theta_bounds(g_ref, seq[:-1], seq[1:], straight_line=straight_line)
    else:
        step = np.zeros(0)
    anchor = c_prime(n) * np.sqrt(det_trace)
    cert = cauchy_tail_certificate(step, anchor, tol_cauchy=tol_cauchy, min_decay=min_decay)
    # lower-bound evidence: separation across each window
    lows = []
    for lo, hi in cert["windows"]:
        lw, _ = theta_bounds(g_ref, seq[lo], seq[hi - 1], straight_line=False)
        lows.append(float(lw))
    cert["window_lower"] = lows
    cert["eps_det"] = eps_det
    cert["eps_conv"] = eps_conv

    result = dict(det_trace=det_trace, step_upper=step, certificate=cert)
    if not cert["certified"]:
        return PointClassification(PointKind.NOT_CAUCHY, notes=cert["reason"], **result)

    lo, hi = cert["windows"][0]
    win_max = [float(np.max(det_trace[a:b])) for a, b in cert["windows"]]
    envelope_down = all(win_max[j] <= win_max[j + 1] * (1 + 1e-12) for j in range(len(win_max) - 1))
    if np.min(det_trace[lo:hi]) < eps_det and envelope_down:
        return PointClassification(
            PointKind.DEGENERATES, notes="determinant collapses", **result
        )
    tail = seq[lo:hi]
    spread = float(np.max(np.abs(tail - tail[-1])))
    cert["spread"] = spread
    if spread <= eps_conv and det_trace[-1] >= eps_det:
        return PointClassification(
            PointKind.CONVERGES, limit=tail[-1].copy(), notes="entries stabilise", **result
        )
    return PointClassification(
        PointKind.NOT_CAUCHY,
        notes=f"certified tail but unresolved: spread {spread:.3g}, final det {det_trace[-1]:.3g}",
        **result,
    )
