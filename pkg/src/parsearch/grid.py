"""Uniform rectangular grids, the obstacle and truncation boundary data."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .analytic import Cost, eta_cartesian, psi_value

MODES = ("parallel", "sequential", "hybrid")

# 5e7 doubles is ~400 MB per field; a solve holds a handful of fields.
MAX_NODES = 50_000_000


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    h: float
    counts: tuple = field(init=False)

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper must have the same, nonzero length")
        h = float(self.h)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"spacing h must be positive, got {self.h!r}")
        counts = []
        for lo, hi in zip(lower, upper):
            if not hi > lo:
                raise ValueError(f"empty axis [{lo}, {hi}]")
            cells = (hi - lo) / h
            n_cells = int(round(cells))
            # a few ulps of slack per cell
            if abs(cells - n_cells) > 64 * np.finfo(float).eps * max(1.0, n_cells):
                raise ValueError(
                    f"axis span {hi - lo} is not an integer multiple of h={h}"
                )
            if n_cells + 1 < 3:
                raise ValueError("each axis needs at least 3 nodes")
            counts.append(n_cells + 1)
        total = int(np.prod(counts, dtype=np.int64))
        if total > MAX_NODES:
            raise MemoryError(
                f"grid has {total} nodes, above the budget of {MAX_NODES}; "
                "increase h or shrink the domain"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "counts", tuple(counts))

    @classmethod
    def cube(cls, d, lo, hi, h):
        return cls((lo,) * d, (hi,) * d, h)

    @property
    def d(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    def axis(self, i):
        # computed from the index to avoid accumulated drift
        return self.lower[i] + self.h * np.arange(self.counts[i])

    def axes(self):
        return [self.axis(i) for i in range(self.d)]

    def mesh(self):
        """Coordinate arrays, one per axis, each of grid shape."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """All node coordinates as an (N, d) array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def ravel_index(self, multi_index):
        return int(np.ravel_multi_index(tuple(multi_index), self.counts))

    def unravel_index(self, flat):
        return tuple(int(i) for i in np.unravel_index(flat, self.counts))

    def node_coords(self, multi_index):
        return np.array([self.lower[i] + self.h * multi_index[i] for i in range(self.d)])

    def nearest_index(self, point):
        point = np.asarray(point, dtype=float)
        if point.shape != (self.d,):
            raise ValueError(f"point must have {self.d} coordinates")
        idx = np.rint((point - np.array(self.lower)) / self.h).astype(int)
        return tuple(int(i) for i in np.clip(idx, 0, np.array(self.counts) - 1))

    def contains(self, point, tol=1e-12):
        point = np.asarray(point, dtype=float)
        return bool(
            np.all(point >= np.array(self.lower) - tol)
            and np.all(point <= np.array(self.upper) + tol)
        )

    def boundary_mask(self):
        mask = np.zeros(self.counts, dtype=bool)
        for ax in range(self.d):
            sl = [slice(None)] * self.d
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    def is_interior(self, multi_index):
        return all(0 < i < n - 1 for i, n in zip(multi_index, self.counts))

    def strides(self):
        """Flat-index offsets of the +e_i neighbour, per axis."""
        return np.array(
            [int(np.prod(self.counts[ax + 1:], dtype=np.int64)) for ax in range(self.d)],
            dtype=np.int64,
        )

    def same_as(self, other):
        return (
            self.counts == other.counts
            and np.allclose(self.lower, other.lower)
            and np.isclose(self.h, other.h)
        )


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def at(self, point):
        return float(self.values[self.grid.nearest_index(point)])


@dataclass
class ContactMask:
    grid: GridSpec
    mask: np.ndarray
    eps_contact: float = 0.0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)

    def at(self, point):
        return bool(self.mask[self.grid.nearest_index(point)])


@dataclass
class BoundaryData:
    """Dirichlet values on the truncation boundary, in grid shape.

    ``values`` holds the far-field envelope at every node; only entries
    under ``grid.boundary_mask()`` are imposed by the solvers.
    """

    grid: GridSpec
    values: np.ndarray
    mode: str

    def on_boundary(self):
        return self.values[self.grid.boundary_mask()]


def obstacle_values(points):
    """g = max(x_1, ..., x_d, 0) row-wise for an (N, d) array."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.maximum(points.max(axis=1), 0.0)


def build_obstacle(grid):
    g = np.maximum(np.maximum.reduce(grid.mesh()), 0.0)
    return ScalarField(grid, g)


def laplacian(values, h):
    """Standard (2d+1)-point Laplacian on interior nodes; boundary entries are 0."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    interior = tuple(slice(1, -1) for _ in range(values.ndim))
    centre = values[interior]
    acc = np.zeros_like(centre)
    for ax in range(values.ndim):
        plus = [slice(1, -1)] * values.ndim
        minus = [slice(1, -1)] * values.ndim
        plus[ax] = slice(2, None)
        minus[ax] = slice(None, -2)
        acc += values[tuple(plus)] + values[tuple(minus)] - 2.0 * centre
    out[interior] = acc / h**2
    return out


def axis_second_differences(values, h):
    """Per-axis central second differences on interior nodes, shape (d, *grid)."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((values.ndim,) + values.shape)
    interior = tuple(slice(1, -1) for _ in range(values.ndim))
    centre = values[interior]
    for ax in range(values.ndim):
        plus = [slice(1, -1)] * values.ndim
        minus = [slice(1, -1)] * values.ndim
        plus[ax] = slice(2, None)
        minus[ax] = slice(None, -2)
        out[(ax,) + interior] = (values[tuple(plus)] + values[tuple(minus)] - 2.0 * centre) / h**2
    return out


def discrete_laplacian(field, node):
    grid = field.grid
    node = tuple(int(i) for i in node)
    if len(node) != grid.d:
        raise ValueError(f"node index must have {grid.d} entries")
    if not grid.is_interior(node):
        raise ValueError(f"node {node} is on the boundary; the stencil needs all neighbours")
    u = field.values
    total = 0.0
    for ax in range(grid.d):
        up = list(node)
        dn = list(node)
        up[ax] += 1
        dn[ax] -= 1
        total += u[tuple(up)] - 2.0 * u[node] + u[tuple(dn)]
    return total / grid.h**2


def mode_costs(cost, mode):
    """Axis cost and diagonal curvature of the far-field envelope for a mode.

    Along an axis band only one coordinate matters, so the cheapest way to
    move it sets the 1-D cost.  Across the diagonal the difference x1 - x2
    is what matters: parallel search moves it with variance 2 at cost c,
    sequential with variance 1 at cost c', which gives eta_c and eta_{2c'}.
    """
    if mode == "parallel":
        return [(cost.c, cost.c)]
    if cost.cprime is None:
        raise ValueError(f"mode {mode!r} needs cprime")
    if mode == "sequential":
        return [(cost.cprime, 2.0 * cost.cprime)]
    if mode == "hybrid":
        return [(cost.c, cost.c), (cost.cprime, 2.0 * cost.cprime)]
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def far_field_envelope(points, cost, mode, full_diagonal: Optional[Callable] = None):
    """Max of known lower barriers for u, evaluated row-wise on (N, d) points.

    Barriers: the 1-D value psi on each coordinate, the two-alternative
    value eta on every coordinate pair, and optionally a caller-provided
    d-alternative barrier (e.g. a chart-solved w_d).  Each is a subsolution,
    so the envelope never exceeds u and never drops below g.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    env = obstacle_values(points)
    for axis_cost, diag_theta in mode_costs(cost, mode):
        for i in range(d):
            env = np.maximum(env, psi_value(points[:, i], axis_cost))
        for i, j in itertools.combinations(range(d), 2):
            env = np.maximum(env, eta_cartesian(points[:, i], points[:, j], diag_theta))
    if full_diagonal is not None and d >= 3:
        env = np.maximum(env, np.asarray(full_diagonal(points), dtype=float))
    return env


def default_eps_contact(cost, mode, h):
    """max(1e-8, c h^2) with the cost that sets the curvature of u - g."""
    if mode == "sequential":
        c_eff = cost.cprime if cost.cprime is not None else cost.c
    elif mode == "hybrid":
        c_eff = min(cost.c, cost.cprime)
    else:
        c_eff = cost.c
    return max(1e-8, c_eff * h**2)


def feature_scale(cost, mode):
    """Largest analytically known continuation-region width for the mode."""
    scales = []
    for axis_cost, diag_theta in mode_costs(cost, mode):
        scales.append(1.0 / (4.0 * axis_cost))
        scales.append(1.0 / (2.0 * diag_theta))
    return max(scales)


def check_margin(grid, cost, mode, factor=4.0):
    need = factor * feature_scale(cost, mode)
    for ax in range(grid.d):
        if grid.lower[ax] > -need or grid.upper[ax] < need:
            raise ValueError(
                f"domain axis {ax} = [{grid.lower[ax]}, {grid.upper[ax]}] is too small: "
                f"the continuation channel reaches the truncation faces. Enlarge the "
                f"domain to at least [-{need:g}, {need:g}] per axis."
            )


def truncation_boundary_values(grid, cost, mode="parallel", full_diagonal=None, margin_factor=4.0):
    if not isinstance(cost, Cost):
        cost = Cost(float(cost))
    check_margin(grid, cost, mode, margin_factor)
    env = far_field_envelope(grid.points(), cost, mode, full_diagonal)
    return BoundaryData(grid, env.reshape(grid.shape), mode)


def default_grid(d, c, h=None, lower=-4.0, upper=8.0):
    """The default experiment box [-4/c, 8/c]^d with h = 1/(80c)."""
    h = 1.0 / (80.0 * c) if h is None else h
    return GridSpec.cube(d, lower / c, upper / c, h)


def grid_from_extents(xmin: Sequence[float], xmax: Sequence[float], h, d):
    xmin = list(xmin)
    xmax = list(xmax)
    if len(xmin) == 1:
        xmin = xmin * d
    if len(xmax) == 1:
        xmax = xmax * d
    if len(xmin) != d or len(xmax) != d:
        raise ValueError(f"need 1 or {d} values for --xmin/--xmax")
    return GridSpec(tuple(xmin), tuple(xmax), h)
