"""Auxiliary problems w_d on the hyperplane orthogonal to the diagonal.

w_d solves min{-1/2 Lap w + c, w - rho} = 0 with rho = max_i x_i (no outside
option).  Subtracting the mean sum(x)/d leaves a function that is constant
along the diagonal, so it suffices to solve for

    omega(y) = w_d(B^T y),   y in R^{d-1},

where the rows of B are an orthonormal basis of {x : sum(x) = 0}.  In these
coordinates the restricted Laplacian is the ordinary (d-1)-dimensional one.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .analytic import Cost, eta_cartesian
from .grid import GridSpec, ScalarField, build_obstacle, truncation_boundary_values
from .solver import solve_obstacle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperplaneChart:
    d: int
    basis: np.ndarray  # (d-1, d), orthonormal rows, each orthogonal to (1,...,1)

    def embed(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return y @ self.basis

    def project(self, x):
        """Chart coordinates of the orthogonal projection of x onto the hyperplane."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - x.mean(axis=1, keepdims=True)) @ self.basis.T

    def obstacle(self, y):
        return self.embed(y).max(axis=1)


def build_chart(d):
    """Gram-Schmidt on e1 - e2, e2 - e3, ..., e_{d-1} - e_d."""
    if d < 2:
        raise ValueError("a hyperplane chart needs d >= 2")
    diffs = np.zeros((d, d - 1))
    for k in range(d - 1):
        diffs[k, k] = 1.0
        diffs[k + 1, k] = -1.0
    q, r = np.linalg.qr(diffs)
    # QR equals Gram-Schmidt once the diagonal of R is made positive
    q = q * np.sign(np.diag(r))
    basis = q.T.copy()
    tau = np.ones(d) / np.sqrt(d)
    if not np.allclose(basis @ basis.T, np.eye(d - 1), atol=1e-12):
        raise ArithmeticError("chart basis is not orthonormal")
    if not np.allclose(basis @ tau, 0.0, atol=1e-12):
        raise ArithmeticError("chart basis is not orthogonal to the diagonal")
    return HyperplaneChart(d, basis)


@dataclass
class WdSolution:
    """Solved auxiliary problem; ``omega`` lives on the chart grid.

    For d = 1 there is no chart: ``omega`` is the 1-D value with obstacle
    max(x, 0), i.e. psi_c.
    """

    d: int
    c: float
    chart: Optional[HyperplaneChart]
    omega: ScalarField
    report: object = None
    _interp: object = field(default=None, repr=False)

    @property
    def grid(self):
        return self.omega.grid

    def _interpolator(self):
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                self.grid.axes(), self.omega.values, method="linear",
                bounds_error=False, fill_value=np.nan,
            )
        return self._interp

    def value(self, x, fill=np.nan):
        """w_d at points x of shape (N, d); ``fill`` outside the chart box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise ValueError(f"points must have {self.d} coordinates")
        if self.chart is None:
            out = self._interpolator()(x)
        else:
            out = self._interpolator()(self.chart.project(x)) + x.mean(axis=1)
        return np.where(np.isnan(out), fill, out)

    def obstacle_gap(self):
        rho = chart_obstacle(self.chart, self.grid) if self.chart is not None else build_obstacle(self.grid).values
        return self.omega.values - rho


def chart_obstacle(chart, grid):
    return chart.obstacle(grid.points()).reshape(grid.shape)


def chart_boundary_values(chart, grid, c, lower: Optional[WdSolution] = None):
    """Lower envelope for w_d on the chart: rho, eta_c on pairs, w_{d-1} on (d-1)-subsets.

    Along a ridge where d-1 coordinates tie and the last is far below, w_d
    is w_{d-1} of the tied coordinates up to an exponentially small term;
    far from every ridge w_d = rho.  Each piece is a subsolution, so the
    envelope is a lower bound that becomes exact on a large enough box.
    """
    x = chart.embed(grid.points())
    env = x.max(axis=1)
    for i, j in itertools.combinations(range(chart.d), 2):
        env = np.maximum(env, eta_cartesian(x[:, i], x[:, j], c))
    if lower is not None and lower.d == chart.d - 1 and lower.d >= 3:
        for subset in itertools.combinations(range(chart.d), chart.d - 1):
            env = np.maximum(env, lower.value(x[:, subset], fill=-np.inf))
    return env.reshape(grid.shape)


def default_chart_grid(d, c, h=None, half_width=None):
    """Chart box [-L, L]^{d-1}; defaults sized for desk-scale runs."""
    if half_width is None:
        half_width = 2.0 / c
    if h is None:
        h = {1: 1 / 400, 2: 1 / 400, 3: 1 / 80, 4: 1 / 20}.get(d, 1 / 20) / c
    dim = max(d - 1, 1)
    n = int(round(half_width / h))
    return GridSpec.cube(dim, -n * h, n * h, h)


def solve_wd(chart, c, grid=None, cfg=None, lower: Optional[WdSolution] = None, d=None):
    """Solve the chart problem for omega = w_d restricted to the hyperplane.

    ``chart=None`` with d = 1 solves the 1-D problem with obstacle max(x, 0)
    directly, which is psi_c.
    """
    cost = Cost(float(c))
    if chart is None:
        if d not in (None, 1):
            raise ValueError("chart=None is only meaningful for d = 1")
        grid = grid or default_chart_grid(1, cost.c)
        bc = truncation_boundary_values(grid, cost, "parallel")
        omega, report = solve_obstacle(grid, build_obstacle(grid).values, bc, cost.c, cfg, "w1")
        return WdSolution(1, cost.c, None, omega, report)
    if chart.d - 1 > 3:
        raise ValueError("chart solves are limited to d <= 4 at desk scale")
    grid = grid or default_chart_grid(chart.d, cost.c)
    if grid.d != chart.d - 1:
        raise ValueError(f"chart grid must be {chart.d - 1}-dimensional")
    rho = chart_obstacle(chart, grid)
    bc = chart_boundary_values(chart, grid, cost.c, lower)
    omega, report = solve_obstacle(grid, rho, bc, cost.c, cfg, f"w{chart.d}")
    return WdSolution(chart.d, cost.c, chart, omega, report)


@dataclass
class RdEstimate:
    d: int
    c: float
    r_d: float
    bracket: tuple
    h: float

    def to_json(self):
        return {"d": self.d, "c": self.c, "r_d": self.r_d, "bracket": list(self.bracket), "h": self.h}


def estimate_rd(sol: WdSolution, eps_contact=None, trusted_fraction=0.8):
    """Smallest chart norm of a contact node, bracketed by half a cell diagonal.

    The default contact tolerance (1e-9 c) only absorbs solver error, so the
    estimate tracks the discrete free boundary rather than a band around it.
    """
    grid = sol.grid
    eps_contact = 1e-9 * max(1.0, sol.c) if eps_contact is None else eps_contact
    gap = sol.obstacle_gap()
    pts = grid.points()
    half = np.asarray(grid.upper) - np.asarray(grid.lower)
    centre = 0.5 * (np.asarray(grid.upper) + np.asarray(grid.lower))
    trusted = np.all(np.abs(pts - centre) <= 0.5 * trusted_fraction * half, axis=1)
    contact = (gap.ravel() <= eps_contact) & trusted
    if not contact.any():
        raise ValueError("no contact nodes in the trusted part of the chart; enlarge the chart box")
    r = float(np.linalg.norm(pts[contact], axis=1).min())
    slack = grid.h * np.sqrt(max(sol.d - 1, 1)) / 2.0
    return RdEstimate(sol.d, sol.c, r, (float(r - slack), float(r + slack)), float(grid.h))


@dataclass
class CheckReport:
    passed: bool
    items: list = field(default_factory=list)
    note: str = ""

    def to_json(self):
        return {"passed": bool(self.passed), "items": self.items, "note": self.note}


def rd_inequality_check(estimates):
    """Check (d-2-1/d) r_d^2 >= (d-2) r_{d-1}^2 and r_d increasing, one-sidedly.

    The left side uses the lower end of r_d's bracket and the right side the
    upper end of r_{d-1}'s, so mesh error can only make the check fail.
    """
    ests = sorted(estimates, key=lambda e: e.d)
    if len(ests) <= 1:
        return CheckReport(True, [], "fewer than two estimates; nothing to compare")
    if len({e.c for e in ests}) != 1:
        raise ValueError("estimates were computed for different costs")
    ds = [e.d for e in ests]
    if ds != list(range(ds[0], ds[0] + len(ds))):
        raise ValueError(f"estimates must be for consecutive d, got {ds}")
    items = []
    ok = True
    for prev, cur in zip(ests, ests[1:]):
        d = cur.d
        increasing = cur.bracket[0] > prev.bracket[1]
        item = {"d": d, "increasing": bool(increasing)}
        if d >= 3:
            lhs = (d - 2 - 1.0 / d) * cur.bracket[0] ** 2
            rhs = (d - 2) * prev.bracket[1] ** 2
            item.update(lhs=float(lhs), rhs=float(rhs), inequality=bool(lhs >= rhs))
            ok &= lhs >= rhs
        ok &= increasing
        items.append(item)
    return CheckReport(bool(ok), items)


def upper_region_check(u, c, K, eps_contact=None):
    """Fraction of grid nodes in N(K d / c) where u = g.

    N(gamma) = {x : x_i >= 0, |x_i - x_j| >= gamma for all i != j}.
    """
    grid = u.grid
    d = grid.d
    gamma = K * d / c
    pts = grid.points()
    sel = np.all(pts >= 0, axis=1)
    for i, j in itertools.combinations(range(d), 2):
        sel &= np.abs(pts[:, i] - pts[:, j]) >= gamma
    if not sel.any():
        raise ValueError(f"N({gamma:g}) has no nodes inside the domain; enlarge it or lower K")
    g = build_obstacle(grid).values.ravel()
    eps = max(1e-8, c * grid.h**2) if eps_contact is None else eps_contact
    contact = (u.values.ravel() - g) <= eps
    frac = float(contact[sel].mean())
    return {"d": d, "c": float(c), "K": float(K), "gamma": float(gamma),
            "nodes": int(sel.sum()), "contact_fraction": frac}


def wd_monotonicity_check(hi: WdSolution, lo: WdSolution, n_samples=2000, deep=None, tol=None):
    """w_hi >= trivially extended w_lo at embedded sample points.

    Points of the lower problem are extended by one coordinate set to 0 and
    to a deeply negative value.  For lo.d == 1 the comparison function is
    the rho-obstacle solution w_1(x) = x (rho = x is harmonic).
    """
    if hi.c != lo.c:
        raise ValueError("solutions were computed for different costs")
    tol = 4.0 * hi.c * hi.grid.h**2 + 1e-9 if tol is None else tol
    if hi.d == lo.d:
        pts = _sample_points(hi, n_samples)
        a = hi.value(pts)
        b = lo.value(pts)
        ok = np.isfinite(a) & np.isfinite(b)
        return bool(np.all(np.abs(a[ok] - b[ok]) <= tol))
    if hi.d != lo.d + 1:
        raise ValueError("compare consecutive dimensions only")
    base = _sample_points(lo, n_samples)
    if lo.d == 1:
        lo_vals = base[:, 0]
    else:
        lo_vals = lo.value(base)
    deep = -2.0 * max(np.abs(hi.grid.lower).max(), 1.0) if deep is None else deep
    checked = 0
    for extra in (0.0, deep):
        x = np.hstack([base, np.full((len(base), 1), extra)])
        hv = hi.value(x)
        ok = np.isfinite(hv) & np.isfinite(lo_vals)
        checked += int(ok.sum())
        if np.any(hv[ok] < lo_vals[ok] - tol):
            return False
    if checked == 0:
        raise ValueError("no sample point fell inside both chart boxes")
    return True


def _sample_points(sol, n):
    """Deterministic sample of points in R^d covered by the solution's chart box."""
    grid = sol.grid
    pts = grid.points()
    stride = max(1, len(pts) // n)
    y = pts[::stride]
    if sol.chart is None:
        return y
    return sol.chart.embed(y)
