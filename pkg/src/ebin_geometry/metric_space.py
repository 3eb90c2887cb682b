"""Geometry of the L2 metric on the space of metrics over a flat torus.

The reference metric is the constant identity, so ``mu_g`` has density
``sqrt(det g)`` per cell and every spatial integral is a midpoint sum over
cells, accumulated with compensated summation in row-major order.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, ndimage

from ._numerics import EPS_DET, EPS_EIG, EPS_PSD, EPS_RANGE, c_const, fsum, fsum_rows, graded_nodes, unique_rows
from .errors import InvalidInput
from .fields import (
    CellMask,
    MetricField,
    MetricPath,
    SemiMetricField,
    TangentField,
    check_same_grid,
)
from .spd_core import (
    _congruence,
    _relative_eigs,
    _sqrt_pair,
    _trace,
    _traceless,
    ebin_domain_sup,
    ebin_exp_point,
    ebin_log_point,
    in_log_range,
    theta_bounds,
)

__all__ = [
    "l2_inner",
    "l2_norm",
    "volume",
    "exp_field",
    "geodesic_path",
    "exp_domain_sup",
    "log_field",
    "curvature_tensor",
    "sectional_curvature",
    "christoffel",
    "path_speeds",
    "path_length",
    "linear_path_length",
    "scaling_path_length",
    "smallvol_bound",
    "mollifier",
    "dist_upper_smallvol",
    "smallvol_sweep",
    "theta_Y",
    "AmenabilityReport",
    "amenable_check",
    "boundary_path_speed2",
    "boundary_path_length",
    "boundary_speed_constant",
    "geodesic_length",
    "dist_upper",
]


def _cell_sum(values, grid):
    return fsum(values) * grid.cell_measure


def _sqrt_det(values):
    # semidefinite inputs may round to a tiny negative determinant
    return np.sqrt(np.clip(np.linalg.det(values), 0.0, None))


# ---------------------------------------------------------------------------
# Scalar product and volume


def l2_inner(g, h, k):
    """L2 scalar product ``int tr_g(hk) mu_g``.

    Parameters
    ----------
    g : MetricField
    h, k : TangentField

    Returns
    -------
    float
    """
    check_same_grid(g, h, k)
    _, gih = _sqrt_pair(g.values)
    hh = _congruence(gih, h.values)
    kh = _congruence(gih, k.values)
    dens = np.einsum("...ij,...ji->...", hh, kh) * _sqrt_det(g.values)
    return _cell_sum(dens, g.grid)


def l2_norm(g, h):
    """``sqrt(l2_inner(g, h, h))``."""
    return math.sqrt(max(l2_inner(g, h, h), 0.0))


def volume(g, Y=None):
    """Riemannian volume ``Vol(Y, g) = sum_Y sqrt(det g) * cell_measure``.

    ``g`` may be a :class:`MetricField` or a :class:`SemiMetricField`;
    ``Y`` defaults to the whole torus.
    """
    dens = _sqrt_det(g.values)
    if Y is not None:
        check_same_grid(g, Y)
        dens = np.where(Y.bits, dens, 0.0)
    return _cell_sum(dens, g.grid)


# ---------------------------------------------------------------------------
# Exponential map


def exp_domain_sup(g0, h):
    """Supremum of the time domain of the L2 geodesic from ``g0`` along ``h``.

    Equals ``-4 / t0`` with ``t0`` the infimum of ``tr(g0^-1 h)`` over cells
    where ``h`` is pure trace with negative trace, and ``inf`` otherwise.
    """
    check_same_grid(g0, h)
    return float(np.min(ebin_domain_sup(g0.values, h.values)))


def exp_field(g0, h, t, *, boundary=False):
    """Evaluate the L2 geodesic ``exp_g0(t h)`` cellwise.

    Raises
    ------
    OutOfDomain
        ``t`` is negative or reaches the domain supremum; ``cell`` names the
        first offending cell.

    Returns
    -------
    MetricField, or SemiMetricField when ``boundary=True`` and some cell
    collapses.
    """
    check_same_grid(g0, h)
    vals = ebin_exp_point(g0.values, h.values, t, boundary=boundary)
    if boundary:
        w = np.linalg.eigvalsh(vals)
        if np.any(~(w[..., 0] > EPS_EIG * np.abs(w[..., -1]))):
            return SemiMetricField(g0.grid, vals)
    return MetricField(g0.grid, vals)


def geodesic_path(g0, h, times):
    """Sample ``t -> exp_g0(t h)`` at ``times`` as a :class:`MetricPath`.

    The cellwise eigen-decompositions are shared across all times.
    """
    check_same_grid(g0, h)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise InvalidInput("times must be one-dimensional")
    stacked = times.reshape((-1,) + (1,) * g0.grid.n)
    vals = ebin_exp_point(g0.values, h.values, stacked)
    return MetricPath(times, [MetricField(g0.grid, v) for v in vals])


def log_field(g0, g1, eps_range=EPS_RANGE):
    """Inverse of :func:`exp_field` at ``t = 1``.

    Raises
    ------
    OutOfRange
        Some cell of ``g1`` is outside the range of the exponential at
        ``g0``; ``cell`` names the first one.
    """
    check_same_grid(g0, g1)
    return TangentField(g0.grid, ebin_log_point(g0.values, g1.values, eps_range))


# ---------------------------------------------------------------------------
# Curvature and connection


def _frame(g, *tangents):
    gh, gih = _sqrt_pair(g.values)
    return gh, [_congruence(gih, t.values) for t in tangents]


def _comm(a, b):
    return a @ b - b @ a


def _tr(a, b):
    return np.einsum("...ij,...ji->...", a, b)


def curvature_tensor(g, h, k, l):
    """Curvature ``R_g(h, k) l`` of the L2 metric as a (0,2) tensor field.

    With ``H = g^-1 h`` etc. the endomorphism ``g^-1 R(h, k) l`` is::

        -1/4 [[H, K], L] + n/16 (tr(HL) K - tr(KL) H)
        + 1/16 (tr K tr L H - tr H tr L K)
        + 1/16 (tr H tr(KL) - tr K tr(HL)) I

    evaluated in the congruence frame so the result is exactly symmetric.
    """
    check_same_grid(g, h, k, l)
    n = g.n
    gh, (H, K, L) = _frame(g, h, k, l)
    trH, trK, trL = _trace(H), _trace(K), _trace(L)
    HL, KL = _tr(H, L), _tr(K, L)

    def s(x):
        return x[..., None, None]

    out = (
        -0.25 * _comm(_comm(H, K), L)
        + (n / 16.0) * (s(HL) * K - s(KL) * H)
        + (1.0 / 16.0) * (s(trK * trL) * H - s(trH * trL) * K)
        + (1.0 / 16.0) * s(trH * KL - trK * HL) * np.eye(n)
    )
    return TangentField(g.grid, gh @ out @ gh)


def sectional_curvature(g, h, k):
    """Unnormalised sectional curvature ``(R(h, k) k, h)``.

    Integrates ``1/4 tr([H_T, K_T]^2) + n/16 (tr(H_T K_T)^2 - tr(H_T^2) tr(K_T^2))``
    against ``mu_g``; every term is nonpositive pointwise.
    """
    check_same_grid(g, h, k)
    n = g.n
    _, (H, K) = _frame(g, h, k)
    Ht, _ = _traceless(H)
    Kt, _ = _traceless(K)
    c = _comm(Ht, Kt)
    dens = 0.25 * _tr(c, c) + (n / 16.0) * (_tr(Ht, Kt) ** 2 - _tr(Ht, Ht) * _tr(Kt, Kt))
    return _cell_sum(dens * _sqrt_det(g.values), g.grid)


def christoffel(g, h, k):
    """Tensorial part of the Christoffel map for constant tangent fields.

    ``-1/2 (h g^-1 k + k g^-1 h) + 1/4 ((tr_g k) h + (tr_g h) k - tr_g(hk) g)``
    """
    check_same_grid(g, h, k)
    gv, hv, kv = g.values, h.values, k.values
    gi_k = np.linalg.solve(gv, kv)
    gi_h = np.linalg.solve(gv, hv)
    sym = hv @ gi_k
    sym = sym + np.swapaxes(sym, -1, -2)  # k g^-1 h is the transpose
    tr_h, tr_k = _trace(gi_h), _trace(gi_k)
    tr_hk = _tr(gi_h, gi_k)
    out = -0.5 * sym + 0.25 * (
        tr_k[..., None, None] * hv + tr_h[..., None, None] * kv - tr_hk[..., None, None] * gv
    )
    return TangentField(g.grid, out)


# ---------------------------------------------------------------------------
# Path lengths


def _lower_solve(low, b):
    """Forward substitution ``low^-1 b`` for stacks of small triangular matrices."""
    n = low.shape[-1]
    x = np.empty(np.broadcast_shapes(low.shape, b.shape))
    for i in range(n):
        acc = b[..., i, :].copy()
        for j in range(i):
            acc -= low[..., i, j, None] * x[..., j, :]
        x[..., i, :] = acc / low[..., i, i, None]
    return x


def path_speeds(path):
    """L2 speed ``||g_t'||_{g_t}`` at every sample of ``path``.

    Uses the stored tangents when present and otherwise second-order
    finite differences (centred inside, one-sided at the ends).  Cells with
    identical trajectories are evaluated once.
    """
    grid = path.grid
    n, T = grid.n, len(path)
    samples = path.fields + (path.tangents or [])
    if all(f._constant for f in samples):
        # spatially constant path: one trajectory covering every cell
        first = (0,) * n
        vals = np.stack([f.values[first] for f in path.fields])[:, None]
        if path.tangents is not None:
            vel = np.stack([t.values[first] for t in path.tangents])[:, None]
        else:
            vel = np.gradient(vals, path.times, axis=0, edge_order=2)
        traj = np.swapaxes(np.stack([vals, vel], axis=2), 0, 1)
        counts = np.array([grid.n_cells])
    else:
        vals = path.values()
        if path.tangents is not None:
            vel = np.stack([t.values for t in path.tangents])
        else:
            vel = np.gradient(vals, path.times, axis=0, edge_order=2)
        joint = np.concatenate(
            [vals.reshape(T, -1, n * n), vel.reshape(T, -1, n * n)], axis=2
        )
        traj, _, counts = unique_rows(np.swapaxes(joint, 0, 1).reshape(grid.n_cells, -1))
        traj = traj.reshape(-1, T, 2, n, n)
    g, h = traj[:, :, 0], traj[:, :, 1]
    # with g = L L^T, tr(g^-1 h g^-1 h) = |L^-1 h L^-T|^2 and sqrt(det g) = prod diag L
    chol = np.linalg.cholesky(g)
    hh = _lower_solve(chol, np.swapaxes(_lower_solve(chol, h), -1, -2))
    dens = np.sum(hh * hh, axis=(-2, -1)) * np.prod(
        np.diagonal(chol, axis1=-2, axis2=-1), axis=-1
    )
    w = counts * grid.cell_measure
    return np.array([math.sqrt(max(fsum(w * dens[:, i]), 0.0)) for i in range(T)])


def path_length(path, rule="trapezoid"):
    """Length ``int ||g_t'|| dt`` of a sampled path.

    Parameters
    ----------
    path : MetricPath
    rule : {"trapezoid", "simpson"}
        Time quadrature applied to the speed samples.
    """
    speeds = path_speeds(path)
    if rule == "trapezoid":
        return float(integrate.trapezoid(speeds, path.times))
    if rule == "simpson":
        return float(integrate.simpson(speeds, x=path.times))
    raise InvalidInput(f"unknown quadrature rule {rule!r}")


def _unique_cells(*arrays):
    """Deduplicate joint cell values; returns (representatives, multiplicity)."""
    flat = np.concatenate([a.reshape(a.shape[0], -1) for a in arrays], axis=1)
    uniq, _, counts = unique_rows(flat)
    return uniq, counts


def _linear_speed2(a, b, t):
    """Cellwise squared L2 speed of ``(1-s) a + s b`` at the nodes ``t``.

    ``a`` must be positive definite.  Returns shape ``(cells, len(t))``.
    """
    mu = _relative_eigs(a, b) - 1.0
    sa = _sqrt_det(a)
    lam = np.clip(1.0 + t[None, :, None] * mu[:, None, :], 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        tr = np.sum((mu[:, None, :] / lam) ** 2, axis=-1)
        s2 = tr * sa[:, None] * np.sqrt(np.prod(lam, axis=-1))
    return np.nan_to_num(s2, nan=0.0, posinf=0.0)


def _field_linear_length(a, b, weights):
    """Length of the straight field path between cell arrays ``a`` and ``b``."""
    t, w = graded_nodes()
    s2 = _linear_speed2(a, b, t)
    speed = np.sqrt(np.clip(fsum_rows((weights[:, None] * s2).T), 0.0, None))
    return float(np.dot(speed, w))


def linear_path_length(g0, g1):
    """L2 length of the straight path ``(1-t) g0 + t g1`` between two fields.

    The cellwise speed is evaluated in closed form from the eigenvalues of
    the pencil ``(g0, g1)``; time integration uses graded Gauss nodes.
    ``g1`` may be a semimetric.
    """
    check_same_grid(g0, g1)
    n = g0.n
    uniq, counts = _unique_cells(g0.flat(), g1.flat())
    k = n * n
    a = uniq[:, :k].reshape(-1, n, n)
    b = uniq[:, k:].reshape(-1, n, n)
    return _field_linear_length(a, b, counts * g0.grid.cell_measure)


def scaling_path_length(g, rho):
    """Length of the shortest conformal path from ``g`` to ``rho * g``.

    ``(4/sqrt(n)) ||rho^(n/4) - 1||_{L2(mu_g)}``; ``rho >= 0`` may vanish.
    """
    rho = np.asarray(rho, dtype=float)
    rho = np.broadcast_to(rho, g.grid.dims)
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise InvalidInput("scaling factor must be finite and nonnegative")
    n = g.n
    dens = (rho ** (n / 4.0) - 1.0) ** 2 * _sqrt_det(g.values)
    return 4.0 / math.sqrt(n) * math.sqrt(_cell_sum(dens, g.grid))


# ---------------------------------------------------------------------------
# Small-volume distance bound


def smallvol_bound(g0, g1, E):
    """``C(n) (sqrt(Vol(E, g0)) + sqrt(Vol(E, g1)))``."""
    check_same_grid(g0, g1, E)
    return c_const(g0.n) * (math.sqrt(volume(g0, E)) + math.sqrt(volume(g1, E)))


def _smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def _periodic_edt(bits):
    """Distance (in cells) from each cell to the nearest ``False`` cell."""
    if not bits.any():
        return np.zeros(bits.shape)
    if bits.all():
        return np.full(bits.shape, np.inf)
    tiled = np.tile(bits, (3,) * bits.ndim)
    d = ndimage.distance_transform_edt(tiled)
    centre = tuple(slice(s, 2 * s) for s in bits.shape)
    return d[centre]


def mollifier(E, s, smooth_width):
    """Scaling field equal to ``s`` deep inside ``E`` and ``1`` away from it.

    The transition is a quintic smoothstep in the periodic signed distance to
    the mask boundary, spread over ``smooth_width`` cells on each side; with
    ``smooth_width = 0`` the field is the sharp ``s`` / ``1`` mixture.
    """
    if not 0 < s <= 1:
        raise InvalidInput("s must lie in (0, 1]")
    if smooth_width < 0:
        raise InvalidInput("smooth_width must be nonnegative")
    bits = E.bits
    # centre-to-centre distance; boundary sits half a cell from each side
    inside = _periodic_edt(bits) - 0.5
    outside = _periodic_edt(~bits) - 0.5
    signed = np.where(bits, inside, -outside)
    if smooth_width == 0:
        frac = bits.astype(float)
    else:
        frac = _smoothstep5((signed + smooth_width) / (2.0 * smooth_width))
    return 1.0 + (s - 1.0) * frac


def dist_upper_smallvol(g0, g1, E, s, smooth_width, *, parts=False):
    """Upper bound on ``d(g0, g1)`` from a three-segment path.

    The path rescales ``g0`` to ``f g0`` along the conformal geodesic, moves
    straight from ``f g0`` to ``f g1``, then rescales back to ``g1``.  The
    factor ``f = mollifier(E, s, smooth_width)`` makes the middle segment
    cheap on ``E``.

    Parameters
    ----------
    g0, g1 : MetricField
        Must agree off ``E``.
    E : CellMask
    s : float
        Scaling depth, ``0 < s <= 1``.
    smooth_width : float
        Transition width in cells.
    parts : bool
        Also return the three segment lengths.

    Raises
    ------
    InvalidInput
        ``g0`` and ``g1`` differ outside ``E``.
    """
    grid = check_same_grid(g0, g1, E)
    off = ~E.bits
    diff = np.abs(g0.values - g1.values)[off]
    scale = np.maximum(np.abs(g0.values[off]), 1.0)
    if diff.size and np.any(diff > 1e-12 * scale):
        raise InvalidInput("g0 and g1 differ outside E")
    if not E.any():
        return (0.0, (0.0, 0.0, 0.0)) if parts else 0.0

    f = mollifier(E, s, smooth_width)
    seg1 = scaling_path_length(g0, f)
    seg3 = scaling_path_length(g1, f)
    # straight middle segment; scaling by f multiplies speed^2 by f^(n/2)
    n = g0.n
    carr = np.any(g0.values != g1.values, axis=(-1, -2))
    if carr.any():
        a = g0.values[carr]
        b = g1.values[carr]
        weight = f[carr] ** (n / 2.0)
        uniq, counts = _unique_cells(a.reshape(-1, n * n), b.reshape(-1, n * n), weight[:, None])
        k = n * n
        aa = uniq[:, :k].reshape(-1, n, n)
        bb = uniq[:, k : 2 * k].reshape(-1, n, n)
        ww = uniq[:, 2 * k] * counts * grid.cell_measure
        seg2 = _field_linear_length(aa, bb, ww)
    else:
        seg2 = 0.0
    total = seg1 + seg2 + seg3
    return (total, (seg1, seg2, seg3)) if parts else total


def smallvol_sweep(g0, g1, E, s_values=None, widths=(0.0,)):
    """Evaluate :func:`dist_upper_smallvol` over a parameter grid.

    Returns
    -------
    rows : list of dict
        ``s``, ``smooth_width``, ``length`` and segment lengths per pair.
    best : dict
        The row with the smallest length.
    """
    if s_values is None:
        s_values = np.geomspace(1.0, 1e-12, 13)
    rows = []
    for w in widths:
        for s in s_values:
            total, (l1, l2, l3) = dist_upper_smallvol(g0, g1, E, float(s), float(w), parts=True)
            rows.append(
                dict(s=float(s), smooth_width=float(w), length=total, seg1=l1, seg2=l2, seg3=l3)
            )
    best = min(rows, key=lambda r: r["length"])
    return rows, best


# ---------------------------------------------------------------------------
# Integrated pointwise distance


def theta_Y(g0, g1, Y=None, *, straight_line=True, refine=False):
    """Certified interval for ``int_Y theta_x(g0(x), g1(x)) dx``.

    Integrates the cellwise :func:`~ebin_geometry.spd_core.theta_bounds`
    with respect to the reference measure.
    """
    grid = check_same_grid(g0, g1)
    if Y is None:
        Y = CellMask.full(grid)
    check_same_grid(g0, Y)
    if not Y.any():
        return 0.0, 0.0
    n = grid.n
    a = g0.values[Y.bits]
    b = g1.values[Y.bits]
    uniq, counts = _unique_cells(a.reshape(-1, n * n), b.reshape(-1, n * n))
    k = n * n
    lo, up = theta_bounds(
        np.eye(n),
        uniq[:, :k].reshape(-1, n, n),
        uniq[:, k:].reshape(-1, n, n),
        straight_line=straight_line,
        refine=refine,
    )
    return fsum(lo * counts) * grid.cell_measure, fsum(up * counts) * grid.cell_measure


# ---------------------------------------------------------------------------
# Amenable sets


@dataclass
class AmenabilityReport:
    """Result of :func:`amenable_check`.

    ``K_volume`` bounds ``sqrt(det g)`` above and its inverse below for
    amenable sets; ``K_hat`` is the largest observed ratio of L2 norms of
    random probes between two members.
    """

    kind: str
    C: float
    delta: float
    K_hat: float
    K_volume: float = math.inf


def amenable_check(fields, *, eps_det=EPS_DET, c_big=None, probes=16, seed=0):
    """Classify a finite family of metrics as amenable or quasi-amenable.

    ``C`` is the largest absolute coefficient and ``delta`` the smallest
    eigenvalue over all members and cells.  The family is ``"amenable"`` when
    ``delta > eps_det``, ``"quasi_amenable"`` when only the coefficient bound
    holds and ``"neither"`` when ``C`` exceeds ``c_big``.
    """
    if not fields:
        raise InvalidInput("need at least one field")
    grid = check_same_grid(*fields)
    n = grid.n
    C = max(float(np.max(np.abs(f.values))) for f in fields)
    delta = min(float(np.min(np.linalg.eigvalsh(f.values)[..., 0])) for f in fields)
    rng = np.random.default_rng(seed)
    k_hat = 1.0
    for _ in range(probes):
        x = rng.standard_normal(grid.value_shape)
        h = TangentField(grid, x + np.swapaxes(x, -1, -2))
        norms = [l2_norm(f, h) for f in fields]
        k_hat = max(k_hat, max(norms) / min(norms))
    if c_big is not None and C > c_big:
        kind = "neither"
    elif delta > eps_det:
        kind = "amenable"
    else:
        kind = "quasi_amenable"
    k_vol = max(delta ** (-n / 2.0), (n * C) ** (n / 2.0)) if kind == "amenable" else math.inf
    return AmenabilityReport(kind, C, delta, k_hat, k_vol)


# ---------------------------------------------------------------------------
# Paths starting on the boundary of the cone


def _boundary_frame(g0, h):
    check_same_grid(g0, h)
    hv = h.values
    w = np.linalg.eigvalsh(hv)
    if np.any(~(w[..., 0] > EPS_EIG * np.abs(w[..., -1]))):
        raise InvalidInput("direction must be positive definite")
    nu = _relative_eigs(hv, g0.values)
    if np.any(nu < -EPS_PSD * np.maximum(np.abs(nu[..., -1:]), 1.0)):
        raise InvalidInput("start point must be positive semidefinite")
    return np.clip(nu, 0.0, None), _sqrt_det(hv)


def boundary_path_speed2(g0, h, t):
    """Cellwise squared speed ``tr_{g_t}(h^2) sqrt(det g_t)`` of ``g0 + t h``.

    ``g0`` may be degenerate; ``h`` must be positive definite.  In the frame
    of ``h`` the path is ``diag(nu + t)`` so the speed is explicit.
    """
    nu, sh = _boundary_frame(g0, h)
    t = np.asarray(t, dtype=float)
    lam = nu[..., None, :] + t[..., None]
    return np.sum(lam**-2.0, axis=-1) * sh[..., None] * np.sqrt(np.prod(lam, axis=-1))


def boundary_speed_constant(g0, h):
    """Cellwise constant ``C6`` with ``speed^2 <= C6 t^(-3/2)`` on ``(0, 1]``.

    ``n (lam_max^h)^2 (lam_max^g0 + lam_max^h)^((n-1)/2) / (lam_min^h)^(3/2)``
    with Euclidean eigenvalues (the reference metric is the identity).
    """
    check_same_grid(g0, h)
    n = g0.n
    wh = np.linalg.eigvalsh(h.values)
    wg = np.linalg.eigvalsh(g0.values)
    return n * wh[..., -1] ** 2 * (wg[..., -1] + wh[..., -1]) ** ((n - 1) / 2.0) / wh[..., 0] ** 1.5


def boundary_path_length(g0, h, samples=None):
    """L2 length of ``g0 + t h`` over ``(0, 1]`` for a possibly degenerate ``g0``.

    With ``samples=None`` the integrable ``t^(-3/4)`` singularity is handled
    by graded Gauss nodes; an integer uses the uniform midpoint rule with that
    many samples (for refinement studies).
    """
    grid = check_same_grid(g0, h)
    if samples is None:
        t, w = graded_nodes()
    else:
        t = (np.arange(samples) + 0.5) / samples
        w = np.full(samples, 1.0 / samples)
    s2 = boundary_path_speed2(g0, h, t).reshape(-1, t.size)
    speed = np.sqrt(fsum_rows(s2.T) * grid.cell_measure)
    return float(np.dot(speed, w))


def geodesic_length(g0, g1, eps_range=EPS_RANGE):
    """L2 length ``||log_g0(g1)||_g0`` of the geodesic from ``g0`` to ``g1``.

    Returns ``inf`` when some cell lies outside the range of the exponential.
    """
    check_same_grid(g0, g1)
    if not np.all(in_log_range(g0.values, g1.values, eps_range)):
        return math.inf
    return l2_norm(g0, log_field(g0, g1, eps_range))


def _weighted_dist_upper(a, b, w):
    """:func:`dist_upper` on deduplicated cells ``a``, ``b`` with weights ``w``."""
    carr = np.any(a != b, axis=(-1, -2))
    if not carr.any():
        return 0.0
    a, b, w = a[carr], b[carr], w[carr]
    best = _field_linear_length(a, b, w)
    if np.all(in_log_range(a, b)):
        h = ebin_log_point(a, b)
        _, gih = _sqrt_pair(a)
        hh = _congruence(gih, h)
        dens = np.einsum("...ij,...ji->...", hh, hh) * _sqrt_det(a)
        best = min(best, math.sqrt(max(fsum(w * dens), 0.0)))
    n = a.shape[-1]
    sv = c_const(n) * (math.sqrt(fsum(w * _sqrt_det(a))) + math.sqrt(fsum(w * _sqrt_det(b))))
    return min(best, sv)


def dist_upper(g0, g1):
    """Best available closed-form upper bound on ``d(g0, g1)``.

    Minimum of the straight-path length, the geodesic length (when defined)
    and ``C(n) (sqrt(Vol(E, g0)) + sqrt(Vol(E, g1)))`` with ``E`` the set of
    cells where the fields differ.
    """
    grid = check_same_grid(g0, g1)
    n = grid.n
    uniq, counts = _unique_cells(g0.flat(), g1.flat())
    k = n * n
    return _weighted_dist_upper(
        uniq[:, :k].reshape(-1, n, n), uniq[:, k:].reshape(-1, n, n), counts * grid.cell_measure
    )
