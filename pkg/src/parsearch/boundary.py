"""Contact sets, free-boundary extraction and the geometric diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .analytic import SQRT2, dfb_upper_bound, eta_half_width
from .grid import ContactMask, ScalarField

log = logging.getLogger(__name__)


def _values(f):
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def contact_set(u, g, eps_contact):
    if not eps_contact > 0:
        raise ValueError("eps_contact must be positive")
    if not u.grid.same_as(g.grid):
        raise ValueError("u and g live on different grids")
    return ContactMask(u.grid, (u.values - g.values) <= eps_contact, eps_contact)


def boundary_nodes(mask):
    """Contact nodes with at least one non-contact axis neighbour, as (n, d) indices.

    Only interior neighbours are inspected, so truncation faces do not
    create spurious interface nodes.
    """
    m = mask.mask
    d = m.ndim
    has_free_nbr = np.zeros_like(m)
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        # neighbour in +ax / -ax direction is non-contact
        has_free_nbr[tuple(lo)] |= ~m[tuple(hi)]
        has_free_nbr[tuple(hi)] |= ~m[tuple(lo)]
    return np.argwhere(m & has_free_nbr)


def boundary_points(mask):
    idx = boundary_nodes(mask)
    grid = mask.grid
    return np.asarray(grid.lower) + grid.h * idx


@dataclass
class StarReport:
    checked: int
    violations: list = field(default_factory=list)
    warning: str = ""

    @property
    def passed(self):
        return not self.violations

    def to_json(self):
        return {
            "checked": int(self.checked),
            "violations": [
                {"x": [float(v) for v in x], "tau": float(tau), "gap": float(gap)}
                for x, tau, gap in self.violations
            ],
        }


def star_shaped_check(mask, u, g, n_rays=10_000, eps_contact=None, taus=(1.1, 1.5, 2.0),
                      allowance=None, trusted_fraction=0.6):
    """Scale sampled contact points away from the origin and confirm contact persists.

    Samples are contact nodes in the central ``trusted_fraction`` of the box
    (the shell near the truncation faces is left out), thinned by a fixed
    stride to at most ``n_rays``.  The gap u - g is interpolated
    multilinearly from nodal values; g's kinks make interpolating u alone
    unreliable.  A violation is recorded when the interpolated gap at
    tau * x exceeds eps_contact + allowance (default 4 eps_contact, the
    largest gap a cell touching the boundary can carry).
    """
    grid = mask.grid
    eps_contact = mask.eps_contact if eps_contact is None else eps_contact
    allowance = 4.0 * eps_contact if allowance is None else allowance
    gap = _values(u) - _values(g)
    lo = np.asarray(grid.lower)
    hi = np.asarray(grid.upper)
    margin = 0.5 * (1.0 - trusted_fraction) * (hi - lo)
    pts = np.asarray(grid.lower) + grid.h * np.argwhere(mask.mask)
    inside = np.all((pts >= lo + margin) & (pts <= hi - margin), axis=1)
    pts = pts[inside]
    pts = pts[np.linalg.norm(pts, axis=1) > 0]
    if len(pts) == 0:
        msg = "no contact nodes in the trusted region; star-shapedness check is vacuous"
        log.warning(msg)
        return StarReport(0, [], msg)
    if len(pts) > n_rays:
        stride = int(np.ceil(len(pts) / n_rays))
        pts = pts[::stride]
    interp = RegularGridInterpolator(grid.axes(), gap, method="linear")
    violations = []
    for tau in taus:
        scaled = tau * pts
        ok = np.all((scaled >= lo) & (scaled <= hi), axis=1)
        if not ok.any():
            continue
        vals = interp(scaled[ok])
        bad = vals > eps_contact + allowance
        for x, v in zip(pts[ok][bad], vals[bad]):
            violations.append((tuple(x), tau, float(v)))
    return StarReport(len(pts), violations)


def axis_distance(mask, c, probe_x2):
    """Edges of the non-contact band around x1 = 0 on rows x2 = probe.

    Each edge is the position of the first contact node met when walking
    outward from the band.  Returns an (n_probes, 2) array of
    (left, right) edges; the 1-D asymptote is +-1/(4c).
    """
    grid = mask.grid
    if grid.d != 2:
        raise ValueError("axis_distance needs a two-dimensional mask")
    x1 = grid.axis(0)
    out = []
    for x2 in np.atleast_1d(probe_x2):
        j = grid.nearest_index((0.0, float(x2)))[1]
        row = mask.mask[:, j]
        free = np.flatnonzero(~row)
        if free.size == 0:
            raise ValueError(
                f"row x2={x2} is entirely in contact; the domain is too small or "
                "the probe is outside the band"
            )
        i0 = free[np.argmin(np.abs(x1[free]))]
        left = i0
        while left > 0 and not row[left]:
            left -= 1
        right = i0
        while right < len(row) - 1 and not row[right]:
            right += 1
        if not row[left] or not row[right]:
            raise ValueError(f"band on row x2={x2} reaches the truncation boundary")
        out.append((x1[left], x1[right]))
    return np.array(out)


@dataclass
class BoundaryProfile:
    c: float
    h: float
    eps_contact: float
    nodes: np.ndarray
    t: np.ndarray
    s_star: np.ndarray
    excluded_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d_fb: list = field(default_factory=list)
    axis: list = field(default_factory=list)

    @property
    def s_asymptote(self):
        return eta_half_width(self.c)

    def dfb(self, T):
        """sup over slices t >= T of |s*(t) - 1/(2 sqrt2 c)|."""
        sel = self.t >= T
        if not sel.any():
            raise ValueError(f"no profile slices with t >= {T}")
        return float(np.abs(self.s_star[sel] - self.s_asymptote).max())

    def to_json(self, star=None):
        return {
            "c": float(self.c),
            "h": float(self.h),
            "eps_contact": float(self.eps_contact),
            "axis_distance": [
                {"x2": float(x2), "left": float(lft), "right": float(rgt)}
                for x2, lft, rgt in self.axis
            ],
            "s_star": [{"t": float(t), "s": float(s)} for t, s in zip(self.t, self.s_star)],
            "d_fb": [
                {"T": float(T), "value": float(v), "bound": None if b is None else float(b)}
                for T, v, b in self.d_fb
            ],
            "star_shaped": star.to_json() if star is not None else {"checked": 0, "violations": []},
        }


def diagonal_profile(mask, c, T_values=(1.0, 2.0)):
    """s*(t) along anti-diagonals of a 2-D mask and the derived d_FB(T).

    Anti-diagonals i + j = k have constant t and an s step of sqrt2 h.  Only
    t >= 0 and s > 0 are scanned (the profile is symmetric in s).  Slices
    without a contact node are dropped with a warning; near the far corner
    they are cut short by the box.
    """
    grid = mask.grid
    if grid.d != 2:
        raise ValueError("diagonal_profile needs a two-dimensional mask")
    n0, n1 = grid.counts
    lo0, lo1 = grid.lower
    h = grid.h
    ts, ss, excluded = [], [], []
    for k in range(n0 + n1 - 1):
        t = (lo0 + lo1 + k * h) / SQRT2
        if t < 0:
            continue
        i = np.arange(max(0, k - n1 + 1), min(n0 - 1, k) + 1)
        j = k - i
        s = ((lo0 + i * h) - (lo1 + j * h)) / SQRT2
        pos = s > 1e-12
        if not pos.any():
            continue
        i, j, s = i[pos], j[pos], s[pos]
        order = np.argsort(s)
        hit = mask.mask[i[order], j[order]]
        if not hit.any():
            excluded.append(t)
            continue
        ts.append(t)
        ss.append(s[order][np.argmax(hit)])
    if excluded:
        log.warning("%d anti-diagonal slices had no contact node and were excluded", len(excluded))
    profile = BoundaryProfile(
        c=c, h=h, eps_contact=mask.eps_contact, nodes=boundary_nodes(mask),
        t=np.array(ts), s_star=np.array(ss), excluded_t=np.array(excluded),
    )
    for T in T_values:
        bound = dfb_upper_bound(T, c) if T >= 1.0 / (2.0 * c) else None
        profile.d_fb.append((T, profile.dfb(T), bound))
    return profile


def half_width_at(profile, t, h):
    """s* on the slice nearest to t (within one slice spacing h/sqrt2)."""
    k = int(np.argmin(np.abs(profile.t - t)))
    if abs(profile.t[k] - t) > h:
        raise ValueError(f"no profile slice near t={t}")
    return float(profile.s_star[k])


def region_inclusion(inner, outer):
    """continuation(inner) within continuation(outer); returns (ok, violating points)."""
    if not inner.grid.same_as(outer.grid):
        raise ValueError("masks live on different grids")
    bad = ~inner.mask & outer.mask
    idx = np.argwhere(bad)
    pts = np.asarray(inner.grid.lower) + inner.grid.h * idx
    return (not bad.any()), pts
