"""Grid containers for metrics, tangents, masks and paths on the flat torus.

Cell values are stored as dense ``(*dims, n, n)`` arrays.  The reference
metric is the constant identity, so ``det(g_ref^-1 g) = det(g)`` cellwise.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ._numerics import EPS_DET, EPS_EIG, EPS_PSD
from .errors import InvalidInput
from .spd_core import pack_sym, sym_dim, unpack_sym

__all__ = [
    "GridSpec",
    "MetricField",
    "TangentField",
    "SemiMetricField",
    "CellMask",
    "MetricPath",
    "check_same_grid",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the unit n-torus.

    Parameters
    ----------
    n : int
        Manifold dimension, ``1 <= n <= 4``.
    dims : tuple of int
        Cells per axis; ``len(dims) == n``.
    cell_measure : float, optional
        Reference volume of one cell.  Defaults to ``1 / prod(dims)`` so the
        torus has unit reference volume.
    """

    n: int
    dims: Tuple[int, ...]
    cell_measure: Optional[float] = None
    periodic: bool = field(default=True, init=False)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not 1 <= self.n <= 4:
            raise InvalidInput("only 1 <= n <= 4 is supported")
        if len(self.dims) != self.n:
            raise InvalidInput(f"need {self.n} axis sizes, got {len(self.dims)}")
        if any(d < 1 for d in self.dims):
            raise InvalidInput("every axis needs at least one cell")
        cm = self.cell_measure
        if cm is None:
            cm = 1.0 / float(np.prod(self.dims))
        cm = float(cm)
        if not (np.isfinite(cm) and cm > 0):
            raise InvalidInput("cell_measure must be positive and finite")
        object.__setattr__(self, "cell_measure", cm)

    @classmethod
    def square(cls, size, n=2):
        return cls(n, (size,) * n)

    @property
    def n_cells(self):
        return int(np.prod(self.dims))

    @property
    def total_volume(self):
        """Reference volume of the torus."""
        return self.cell_measure * self.n_cells

    @property
    def value_shape(self):
        return self.dims + (self.n, self.n)

    def coordinates(self):
        """Cell-centre coordinates in ``[0, 1)^n``, one array per axis."""
        axes = [(np.arange(d) + 0.5) / d for d in self.dims]
        return np.meshgrid(*axes, indexing="ij")


def check_same_grid(*objs):
    grids = {o.grid for o in objs}
    if len(grids) != 1:
        raise InvalidInput("fields live on different grids")
    return objs[0].grid


class _CellField:
    """Shared storage logic: a grid plus a ``(*dims, n, n)`` value array."""

    _kind = "field"

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        # constant fields are validated through a single representative cell
        self._constant = values.shape == (grid.n, grid.n)
        if not self._constant and values.shape != grid.value_shape:
            raise InvalidInput(
                f"{self._kind} values have shape {values.shape}, "
                f"grid expects {grid.value_shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInput(f"{self._kind} has non-finite entries")
        values = 0.5 * (values + np.swapaxes(values, -1, -2))
        if self._constant:
            values = np.broadcast_to(values, grid.value_shape)
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @classmethod
    def constant(cls, grid, value):
        value = np.asarray(value, float)
        if value.shape != (grid.n, grid.n):
            value = np.broadcast_to(value, grid.value_shape)
        return cls(grid, value)

    def _sample(self):
        """Values to validate: one cell for constant fields, else all."""
        if self._constant:
            return self.values[(0,) * self.grid.n][None]
        return self.values

    @classmethod
    def from_packed(cls, grid, data):
        data = np.asarray(data, dtype=float).reshape(grid.dims + (sym_dim(grid.n),))
        return cls(grid, unpack_sym(data, grid.n))

    def packed(self):
        """Upper-triangle storage, shape ``(*dims, n(n+1)/2)``."""
        return pack_sym(self.values)

    @property
    def n(self):
        return self.grid.n

    def flat(self):
        """Values as ``(n_cells, n, n)`` in row-major cell order."""
        return self.values.reshape((-1, self.n, self.n))

    def determinant(self):
        return np.linalg.det(self.values)

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, dims={self.grid.dims})"


class TangentField(_CellField):
    """Symmetric tensor field, a tangent vector to the space of metrics."""

    _kind = "tangent field"

    def __add__(self, other):
        check_same_grid(self, other)
        return TangentField(self.grid, self.values + other.values)

    def __sub__(self, other):
        check_same_grid(self, other)
        return TangentField(self.grid, self.values - other.values)

    def __mul__(self, c):
        c = np.asarray(c, dtype=float)
        if c.ndim:
            c = c[..., None, None]
        return TangentField(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return TangentField(self.grid, -self.values)


class SemiMetricField(_CellField):
    """Positive-semidefinite tensor field (finite volume on a finite grid).

    A cell is *degenerate* when ``det(g) < eps_det``.
    """

    _kind = "semimetric"

    def __init__(self, grid, values, eps_psd=EPS_PSD):
        super().__init__(grid, values)
        w = np.linalg.eigvalsh(self._sample())
        scale = np.maximum(np.abs(w[..., -1]), 1.0)
        if np.any(w[..., 0] < -eps_psd * scale):
            raise InvalidInput("semimetric has a negative eigenvalue")

    def degenerate_mask(self, eps_det=EPS_DET):
        return CellMask(self.grid, self.determinant() < eps_det)

    def canonical(self, eps_det=EPS_DET):
        """Representative with exact zeros on degenerate cells."""
        bad = self.determinant() < eps_det
        return SemiMetricField(self.grid, np.where(bad[..., None, None], 0.0, self.values))


class MetricField(_CellField):
    """Positive-definite tensor field (a Riemannian metric on the torus)."""

    _kind = "metric"

    def __init__(self, grid, values, eps_eig=EPS_EIG):
        super().__init__(grid, values)
        sample = self._sample()
        if eps_eig == 0.0:
            # a successful Cholesky factorisation already certifies definiteness
            try:
                np.linalg.cholesky(sample)
                return
            except np.linalg.LinAlgError:
                pass
        w = np.linalg.eigvalsh(sample)
        bad = ~(w[..., 0] > eps_eig * np.abs(w[..., -1]))
        if np.any(bad):
            cell = (0,) * grid.n if self._constant else tuple(int(i) for i in np.argwhere(bad)[0])
            raise InvalidInput(f"metric is not positive definite at cell {cell}")

    @classmethod
    def identity(cls, grid):
        return cls.constant(grid, np.eye(grid.n))

    def scaled(self, rho):
        """Conformal rescaling ``rho * g`` with a positive scalar field ``rho``."""
        rho = np.asarray(rho, dtype=float)
        if rho.ndim:
            rho = rho[..., None, None]
        return MetricField(self.grid, rho * self.values)

    def as_semimetric(self):
        return SemiMetricField(self.grid, self.values)


class CellMask:
    """Boolean selection of grid cells (a measurable subset at grid scale).

    ``witness`` optionally records, per cell, the sequence index that put the
    cell into the mask (``-1`` elsewhere).
    """

    def __init__(self, grid, bits, witness=None):
        bits = np.asarray(bits, dtype=bool)
        if bits.shape == ():
            bits = np.full(grid.dims, bool(bits))
        if bits.shape != grid.dims:
            raise InvalidInput(f"mask shape {bits.shape} does not match grid {grid.dims}")
        bits = bits.copy()
        bits.flags.writeable = False
        self.grid = grid
        self.bits = bits
        if witness is not None:
            witness = np.asarray(witness, dtype=int).reshape(grid.dims)
        self.witness = witness

    @classmethod
    def full(cls, grid):
        return cls(grid, True)

    @classmethod
    def empty(cls, grid):
        return cls(grid, False)

    @classmethod
    def half(cls, grid, axis=0, upper=True):
        """Cells with coordinate ``x_axis >= 1/2`` (or ``< 1/2``)."""
        x = grid.coordinates()[axis]
        return cls(grid, x >= 0.5 if upper else x < 0.5)

    def __and__(self, other):
        check_same_grid(self, other)
        return CellMask(self.grid, self.bits & other.bits)

    def __or__(self, other):
        check_same_grid(self, other)
        return CellMask(self.grid, self.bits | other.bits)

    def __invert__(self):
        return CellMask(self.grid, ~self.bits)

    def __le__(self, other):
        check_same_grid(self, other)
        return bool(np.all(~self.bits | other.bits))

    def __eq__(self, other):
        return (
            isinstance(other, CellMask)
            and self.grid == other.grid
            and np.array_equal(self.bits, other.bits)
        )

    __hash__ = None

    def count(self):
        return int(self.bits.sum())

    def any(self):
        return bool(self.bits.any())

    def reference_volume(self):
        return self.count() * self.grid.cell_measure

    def __repr__(self):
        return f"CellMask({self.count()}/{self.grid.n_cells} cells)"


class MetricPath:
    """Time-sampled path of metric fields.

    Parameters
    ----------
    times : sequence of float
        Strictly increasing, at least two samples.
    fields : sequence of MetricField
        One field per time, all on the same grid.
    tangents : sequence of TangentField, optional
        Exact velocities at the sample times.  When absent, path lengths use
        finite-difference tangents.
    """

    def __init__(
        self,
        times: Sequence[float],
        fields: Sequence[MetricField],
        tangents: Optional[Sequence[TangentField]] = None,
    ):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidInput("a path needs at least two time samples")
        if not np.all(np.isfinite(times)) or np.any(np.diff(times) <= 0):
            raise InvalidInput("times must be finite and strictly increasing")
        if len(fields) != times.size:
            raise InvalidInput("one field per time sample is required")
        check_same_grid(*fields)
        if tangents is not None:
            if len(tangents) != times.size:
                raise InvalidInput("one tangent per time sample is required")
            check_same_grid(*fields, *tangents)
        self.times = times
        self.fields = list(fields)
        self.tangents = None if tangents is None else list(tangents)
        self.grid = fields[0].grid

    @classmethod
    def from_function(cls, grid, times, func, velocity=None):
        """Sample ``func(t) -> (*dims, n, n)`` (and optionally its derivative)."""
        fields = [MetricField(grid, func(t)) for t in times]
        tangents = None
        if velocity is not None:
            tangents = [TangentField(grid, velocity(t)) for t in times]
        return cls(times, fields, tangents)

    def values(self):
        """Stacked values, shape ``(T, *dims, n, n)``."""
        return np.stack([f.values for f in self.fields])

    def __len__(self):
        return self.times.size
