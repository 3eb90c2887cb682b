"""Limits of Cauchy sequences of metrics and the completed conformal orbit.

A finite sequence of fields stands in for a Cauchy sequence.  Cells are
classified individually with
:func:`~ebin_geometry.spd_core.classify_point_sequence`; the sequence as a
whole must pass a tail certificate built from distance upper bounds before
an omega-limit is reported.  On a grid "almost everywhere" means "every
cell", so nullsets are invisible.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import EPS_CONV, EPS_DET, c_const, fsum, unique_rows
from .errors import InvalidInput, NotCauchySequence
from .fields import CellMask, MetricField, SemiMetricField, check_same_grid
from .metric_space import (
    _weighted_dist_upper,
    amenable_check,
    path_length,
    smallvol_bound,
    smallvol_sweep,
    volume,
)
from .fields import MetricPath, TangentField
from .spd_core import (
    PointKind,
    cauchy_tail_certificate,
    classify_point_sequence,
    theta_bounds,
)

__all__ = [
    "SemiMetricField",
    "SequenceReport",
    "deflated_unbounded_sets",
    "sequence_certificate",
    "omega_limit",
    "semimetric_equiv",
    "volume_convergence_report",
    "dominator_check",
    "interleave",
    "psi",
    "psi_inv",
    "conformal_distance",
    "conformal_path_length",
    "orbit_completion_member",
    "mask_mix",
    "mask_mix_check",
]

DEFAULT_C_BIG = 1e6


def _check_seq(seq):
    if len(seq) == 0:
        raise InvalidInput("empty sequence")
    return check_same_grid(*seq)


def deflated_unbounded_sets(seq, eps_det=EPS_DET, c_big=DEFAULT_C_BIG):
    """Deflated and unbounded cell sets of a finite sequence.

    A cell is deflated when ``det g_k < eps_det`` for some ``k`` and
    unbounded when some coefficient exceeds ``c_big`` in absolute value.
    Each mask records the first witnessing index in ``mask.witness``.

    Returns
    -------
    deflated, unbounded : CellMask
    """
    grid = _check_seq(seq)
    dets = np.stack([np.linalg.det(g.values) for g in seq])
    big = np.stack([np.max(np.abs(g.values), axis=(-1, -2)) for g in seq])

    def first(hit):
        any_hit = hit.any(axis=0)
        return any_hit, np.where(any_hit, np.argmax(hit, axis=0), -1)

    d_bits, d_wit = first(dets < eps_det)
    u_bits, u_wit = first(big > c_big)
    return CellMask(grid, d_bits, d_wit), CellMask(grid, u_bits, u_wit)


def _compress(seq):
    """Distinct cell trajectories ``(U, N, n, n)``, their weights and cell map."""
    grid = _check_seq(seq)
    n = grid.n
    stack = np.stack([g.values for g in seq]).reshape(len(seq), -1, n * n)
    traj, inverse, counts = unique_rows(np.swapaxes(stack, 0, 1).reshape(grid.n_cells, -1))
    traj = traj.reshape(-1, len(seq), n, n)
    return traj, counts * grid.cell_measure, np.asarray(inverse).reshape(-1)


def sequence_certificate(seq, *, tol_cauchy=1e-6, min_decay=0.1, _compressed=None):
    """Tail certificate for ``sum d(g_k, g_k+1) < inf`` on a finite prefix.

    Consecutive distances are bounded by
    :func:`~ebin_geometry.metric_space.dist_upper`; the distance between any
    two members is also at most ``C(n) (sqrt(Vol(E, g_m)) + sqrt(Vol(E, g_l)))``
    with ``E`` the cells where the sequence varies at all.
    """
    grid = _check_seq(seq)
    traj, w, _ = _compress(seq) if _compressed is None else _compressed
    steps = np.array(
        [_weighted_dist_upper(traj[:, k], traj[:, k + 1], w) for k in range(len(seq) - 1)]
    )
    varies = np.any(traj != traj[:, :1], axis=(1, 2, 3))
    sd = np.sqrt(np.clip(np.linalg.det(traj[varies]), 0.0, None))  # (U', N)
    anchor = np.array(
        [c_const(grid.n) * math.sqrt(fsum(w[varies] * sd[:, k])) for k in range(len(seq))]
    )
    cert = cauchy_tail_certificate(steps, anchor, tol_cauchy=tol_cauchy, min_decay=min_decay)
    cert["step_upper"] = steps.tolist()
    cert["anchor_upper"] = anchor.tolist()
    return cert


@dataclass
class SequenceReport:
    """Classification of a finite sequence of metric fields.

    Attributes
    ----------
    deflated, unbounded : CellMask
    omega_limit : SemiMetricField
        Cellwise limit, exactly zero on deflated or degenerating cells.
    per_cell : ndarray of PointClassification
        Shape ``grid.dims``.
    volume_trace : ndarray
        ``Vol(M, g_k)`` for every ``k``.
    cauchy_certificate : dict
    unresolved : CellMask
        Cells that are neither deflated nor convergent; the limit stores the
        last sample there.
    params : dict
        The thresholds used.
    """

    deflated: CellMask
    unbounded: CellMask
    omega_limit: SemiMetricField
    per_cell: np.ndarray = field(repr=False)
    volume_trace: np.ndarray = field(repr=False)
    cauchy_certificate: dict = field(repr=False)
    unresolved: CellMask = None
    params: dict = field(default_factory=dict)

    def kinds(self):
        """Array of classification labels, shape ``grid.dims``."""
        return np.vectorize(lambda c: c.kind.value, otypes=[object])(self.per_cell)

    def to_dict(self):
        grid = self.omega_limit.grid
        kinds = self.kinds()
        labels = sorted(set(kinds.ravel().tolist()))
        return {
            "version": 1,
            "n": grid.n,
            "dims": list(grid.dims),
            "cell_measure": grid.cell_measure,
            "deflated": self.deflated.bits.astype(int).ravel().tolist(),
            "unbounded": self.unbounded.bits.astype(int).ravel().tolist(),
            "unresolved": self.unresolved.bits.astype(int).ravel().tolist(),
            "omega_limit": self.omega_limit.packed().ravel().tolist(),
            "classification": {
                lab: (kinds == lab).astype(int).ravel().tolist() for lab in labels
            },
            "volume_trace": np.asarray(self.volume_trace).tolist(),
            "cauchy_certificate": self.cauchy_certificate,
            "params": self.params,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def omega_limit(
    seq,
    *,
    eps_det=EPS_DET,
    eps_conv=EPS_CONV,
    c_big=DEFAULT_C_BIG,
    tol_cauchy=1e-6,
    min_decay=0.1,
):
    """Omega-limit of a finite sequence of metric fields.

    Raises
    ------
    NotCauchySequence
        The sequence fails :func:`sequence_certificate`; the exception's
        ``evidence`` holds the certificate.
    """
    grid = _check_seq(seq)
    traj, w, inverse = _compress(seq)
    cert = sequence_certificate(
        seq, tol_cauchy=tol_cauchy, min_decay=min_decay, _compressed=(traj, w, inverse)
    )
    if not cert["certified"]:
        raise NotCauchySequence(cert["reason"], evidence=cert)
    deflated, unbounded = deflated_unbounded_sets(seq, eps_det, c_big)

    classes = [
        classify_point_sequence(
            t, eps_det=eps_det, eps_conv=eps_conv,
            tol_cauchy=tol_cauchy, min_decay=min_decay,
        )
        for t in traj
    ]
    per_cell = np.empty(grid.n_cells, dtype=object)
    for i, j in enumerate(inverse):
        per_cell[i] = classes[j]
    per_cell = per_cell.reshape(grid.dims)

    kind = np.vectorize(lambda c: c.kind, otypes=[object])(per_cell)
    degenerate = deflated.bits | (kind == PointKind.DEGENERATES)
    converged = (kind == PointKind.CONVERGES) & ~degenerate
    last = seq[-1].values
    limit = np.where(degenerate[..., None, None], 0.0, last)
    for idx in zip(*np.nonzero(converged)):
        limit[idx] = per_cell[idx].limit
    unresolved = ~(degenerate | converged)

    return SequenceReport(
        deflated=deflated,
        unbounded=unbounded,
        omega_limit=SemiMetricField(grid, limit),
        per_cell=per_cell,
        volume_trace=np.array(
            [fsum(w * np.sqrt(np.clip(np.linalg.det(traj[:, k]), 0.0, None))) for k in range(len(seq))]
        ),
        cauchy_certificate=cert,
        unresolved=CellMask(grid, unresolved),
        params=dict(
            eps_det=eps_det, eps_conv=eps_conv, c_big=c_big,
            tol_cauchy=tol_cauchy, min_decay=min_decay,
        ),
    )


def semimetric_equiv(a, b, eps_det=EPS_DET, eps_conv=EPS_CONV):
    """Grid-scale equivalence of two semimetrics.

    True iff both have the same degenerate cells and agree within
    ``eps_conv`` (max-norm) on all other cells.
    """
    check_same_grid(a, b)
    da = a.determinant() < eps_det
    db = b.determinant() < eps_det
    if not np.array_equal(da, db):
        return False
    keep = ~da
    if not keep.any():
        return True
    return bool(np.max(np.abs(a.values[keep] - b.values[keep])) <= eps_conv)


def _window_decay(trace):
    """Dyadic-window maxima of a trace and their fitted power-law exponent."""
    trace = np.asarray(trace, dtype=float)
    hi, maxima, starts = trace.size, [], []
    while hi - hi // 2 >= 2 and len(maxima) < 4:
        lo = hi // 2
        maxima.append(float(np.max(trace[lo:hi])))
        starts.append(lo + 1)
        hi = lo
    if len(maxima) < 2 or min(maxima) <= 0:
        return maxima, None
    slope = np.polyfit(np.log(starts), np.log(maxima), 1)[0]
    return maxima, float(-slope)


def volume_convergence_report(seq, limit, masks, deflated=None, min_decay=0.1):
    """Volumes of ``masks`` along ``seq`` against the volume of ``limit``.

    Parameters
    ----------
    seq : list of MetricField
    limit : SemiMetricField
    masks : dict of name -> CellMask, or list of CellMask
    deflated : CellMask, optional
        When given, adds a row checking that ``Vol(deflated, g_k) -> 0``.

    Returns
    -------
    list of dict
        One row per mask: ``trace``, ``limit``, ``residual`` (last sample
        minus limit, absolute) and, for the deflated row, ``pass``.
    """
    grid = _check_seq(seq)
    check_same_grid(seq[0], limit)
    if not isinstance(masks, dict):
        masks = {f"mask{i}": m for i, m in enumerate(masks)}
    rows = []
    for name, Y in masks.items():
        trace = np.array([volume(g, Y) for g in seq])
        lim = volume(limit, Y)
        rows.append(
            dict(mask=name, trace=trace.tolist(), limit=lim, residual=abs(trace[-1] - lim))
        )
    if deflated is not None:
        check_same_grid(deflated, seq[0])
        trace = np.array([volume(g, deflated) for g in seq])
        maxima, decay = _window_decay(trace)
        monotone = all(maxima[j] <= maxima[j + 1] for j in range(len(maxima) - 1))
        ok = (not deflated.any()) or (decay is not None and decay >= min_decay and monotone)
        rows.append(
            dict(
                mask="deflated", trace=trace.tolist(), limit=0.0,
                residual=float(trace[-1]), window_max=maxima, decay=decay, **{"pass": bool(ok)}
            )
        )
    del grid
    return rows


def dominator_check(seq):
    """Cellwise running bound on the volume density along a sequence.

    Verifies ``sqrt(det G_k) <= sqrt(n)/2 * sum_{m<k} theta_upper(g_m, g_m+1)
    + sqrt(det G_1)`` and returns the smallest margin over cells and ``k``
    (nonnegative when the bound holds).
    """
    grid = _check_seq(seq)
    if len(seq) == 1:
        return 0.0
    traj, _, _ = _compress(seq)
    sd = np.sqrt(np.linalg.det(traj))
    _, up = theta_bounds(np.eye(grid.n), traj[:, :-1], traj[:, 1:])
    run = np.concatenate([np.zeros((traj.shape[0], 1)), np.cumsum(up, axis=1)], axis=1)
    margin = math.sqrt(grid.n) / 2.0 * run + sd[:, :1] - sd
    return float(np.min(margin))


def interleave(seq_a, seq_b):
    """``a_1, b_1, a_2, b_2, ...`` truncated to the shorter sequence."""
    out = []
    for a, b in zip(seq_a, seq_b):
        out.extend([a, b])
    return out


# ---------------------------------------------------------------------------
# Conformal orbit


def _scalar(x, grid):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(x, grid.dims)


def psi(lam, g):
    """``(1 + n lam / 4)^(4/n) g`` for a scalar field ``lam >= -4/n``.

    Returns a :class:`SemiMetricField` when some cell reaches ``-4/n``.
    """
    n = g.n
    lam = _scalar(lam, g.grid)
    if not np.all(np.isfinite(lam)) or np.any(lam < -4.0 / n):
        raise InvalidInput("lambda must be finite and >= -4/n")
    rho = (1.0 + 0.25 * n * lam) ** (4.0 / n)
    vals = rho[..., None, None] * g.values
    if np.any(rho == 0):
        return SemiMetricField(g.grid, vals)
    return MetricField(g.grid, vals)


def psi_inv(rho, g):
    """``(4/n) (rho^(n/4) - 1)``, the inverse of :func:`psi`.

    ``rho`` is either a nonnegative scalar field or a field conformal to ``g``
    (its factor is then read off as ``tr(g^-1 rho g) / n``).
    """
    n = g.n
    if hasattr(rho, "values"):
        check_same_grid(rho, g)
        factor = np.trace(np.linalg.solve(g.values, rho.values), axis1=-2, axis2=-1) / n
        resid = rho.values - factor[..., None, None] * g.values
        scale = np.max(np.abs(rho.values)) + 1.0
        if np.max(np.abs(resid)) > 1e-12 * scale:
            raise InvalidInput("field is not conformal to g")
        rho = factor
    rho = _scalar(rho, g.grid)
    if not np.all(np.isfinite(rho)) or np.any(rho < 0):
        raise InvalidInput("conformal factor must be finite and nonnegative")
    return (4.0 / n) * (rho ** (n / 4.0) - 1.0)


def conformal_distance(rho0, rho1, g):
    """Distance between ``rho0 g`` and ``rho1 g`` in the completed orbit.

    ``(4/sqrt(n)) ||rho1^(n/4) - rho0^(n/4)||_{L2(mu_g)}``.
    """
    n = g.n
    r0, r1 = _scalar(rho0, g.grid), _scalar(rho1, g.grid)
    for r in (r0, r1):
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise InvalidInput("conformal factors must be finite and nonnegative")
    dens = (r1 ** (n / 4.0) - r0 ** (n / 4.0)) ** 2 * np.sqrt(np.linalg.det(g.values))
    return 4.0 / math.sqrt(n) * math.sqrt(fsum(dens) * g.grid.cell_measure)


def conformal_path_length(rho0, rho1, g, samples=201):
    """Quadrature length of ``t -> psi(kappa + t (lambda - kappa))``.

    Independent check of :func:`conformal_distance`: the path is sampled as a
    :class:`~ebin_geometry.fields.MetricPath` with exact velocities and its
    L2 length integrated numerically.  Requires positive factors.
    """
    n = g.n
    kappa, lam = psi_inv(rho0, g), psi_inv(rho1, g)
    delta = lam - kappa
    times = np.linspace(0.0, 1.0, samples)

    def base(t):
        return 1.0 + 0.25 * n * (kappa + t * delta)

    fields = [MetricField(g.grid, (base(t) ** (4.0 / n))[..., None, None] * g.values) for t in times]
    tangents = [
        TangentField(g.grid, (base(t) ** (4.0 / n - 1.0) * delta)[..., None, None] * g.values)
        for t in times
    ]
    return path_length(MetricPath(times, fields, tangents), rule="simpson")


def orbit_completion_member(rho, grid=None):
    """True iff ``rho`` is finite and nonnegative on every cell.

    On a finite grid this is equivalent to ``rho >= 0`` with finite
    ``L^(n/2)`` norm.
    """
    rho = np.asarray(rho, dtype=float)
    if grid is not None and rho.shape not in ((), grid.dims):
        raise InvalidInput("factor does not match the grid")
    return bool(np.all(np.isfinite(rho)) and np.all(rho >= 0))


# ---------------------------------------------------------------------------
# Sharp mask mixtures


def mask_mix(g0, g1, E):
    """Mixture equal to ``g1`` on ``E`` and ``g0`` elsewhere, with its bound.

    Returns
    -------
    mix : MetricField
    bound : float
        ``C(n) (sqrt(Vol(E, g0)) + sqrt(Vol(E, g1)))``, an upper bound on the
        distance from ``g0`` to ``mix``.
    """
    check_same_grid(g0, g1, E)
    mix = MetricField(g0.grid, np.where(E.bits[..., None, None], g1.values, g0.values))
    return mix, smallvol_bound(g0, g1, E)


def mask_mix_check(g0, g1, E, s_values=None, widths=(0.0,), c_big=None, factor=1.1):
    """Compare the best smoothed-path length with the mixture bound.

    Returns a dict with ``bound``, the sweep ``rows``, the ``best`` row and
    ``pass`` (best length within ``factor`` times the bound).
    """
    report = amenable_check([g0, g1], c_big=c_big)
    if report.kind == "neither":
        raise InvalidInput("fields are not in a common quasi-amenable set")
    mix, bound = mask_mix(g0, g1, E)
    if not E.any():
        return dict(bound=bound, rows=[], best=None, **{"pass": True})
    rows, best = smallvol_sweep(g0, mix, E, s_values=s_values, widths=widths)
    return dict(
        bound=bound, rows=rows, best=best, amenability=report.kind,
        **{"pass": bool(best["length"] <= factor * bound)},
    )
