"""Closed-form reference functions for the parallel-search stopping problem.

Everything here is vectorised over numpy arrays and side-effect free.  The
functions serve three purposes: far-field boundary data for the grid
solver, test oracles, and the sandwich bounds used by the verification
suite.

Coordinates.  In two dimensions we often work in the rotated frame

    t = (x1 + x2) / sqrt(2)      (along the diagonal)
    s = (x1 - x2) / sqrt(2)      (across the diagonal)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Cost:
    """Search costs per unit time.

    ``c`` is the parallel cost; ``cprime`` is the single-alternative
    (sequential) cost, only needed for the sequential and hybrid modes.
    """

    c: float
    cprime: Optional[float] = None

    def __post_init__(self):
        _check_positive(self.c, "c")
        if self.cprime is not None:
            _check_positive(self.cprime, "cprime")

    def check_hybrid(self):
        if self.cprime is None:
            raise ValueError("hybrid search needs cprime")
        if not (self.c / 2 < self.cprime < self.c):
            raise ValueError(
                f"hybrid search requires c/2 < cprime < c, got c={self.c}, "
                f"cprime={self.cprime}"
            )


@dataclass(frozen=True)
class RotatedPoint:
    t: float
    s: float

    @classmethod
    def from_cartesian(cls, x1, x2):
        t, s = to_rotated(x1, x2)
        return cls(float(t), float(s))

    def to_cartesian(self):
        return from_rotated(self.t, self.s)


def _check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")


def to_rotated(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (x1 + x2) / SQRT2, (x1 - x2) / SQRT2


def from_rotated(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return (t + s) / SQRT2, (t - s) / SQRT2


def psi_value(x, c):
    """One-alternative value function with outside option 0.

    Zero below -1/(4c), the parabola c(x + 1/(4c))^2 in between and the
    identity above 1/(4c).  C^1 at both junctions.
    """
    _check_positive(c, "c")
    x = np.asarray(x, dtype=float)
    b = 1.0 / (4.0 * c)
    out = np.where(x >= b, x, c * (x + b) ** 2)
    out = np.where(x <= -b, 0.0, out)
    # junction ties go to the parabola; both branches agree there
    out = np.where(np.abs(x) <= b, c * (x + b) ** 2, out)
    return out[()] if out.ndim == 0 else out


def eta_value(t, s, theta):
    """Two-alternative value without outside option, in rotated coordinates.

    t/sqrt2 + theta*s^2 + 1/(8 theta) for |s| <= 1/(2 sqrt2 theta),
    (t + |s|)/sqrt2 otherwise.
    """
    _check_positive(theta, "theta")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    half_width = 1.0 / (2.0 * SQRT2 * theta)
    inner = t / SQRT2 + theta * s**2 + 1.0 / (8.0 * theta)
    outer = (t + np.abs(s)) / SQRT2
    out = np.where(np.abs(s) <= half_width, inner, outer)
    return out[()] if out.ndim == 0 else out


def eta_cartesian(x1, x2, theta):
    t, s = to_rotated(x1, x2)
    return eta_value(t, s, theta)


def eta_half_width(theta):
    """Half-width in s of the non-contact channel of eta_theta."""
    _check_positive(theta, "theta")
    return 1.0 / (2.0 * SQRT2 * theta)


def _hinge_sq(z):
    return np.maximum(1.0 - z, 0.0) ** 2


def phi_upper(t, s, c, eps):
    """Upper barrier (1/(4c)) h(alpha t) + eta_{c-eps}(t, s), alpha = 2 sqrt(c eps).

    Valid for t >= 0.  ``eps`` must lie strictly inside (0, c); at eps = c
    the eta term blows up.
    """
    _check_positive(c, "c")
    eps_arr = np.asarray(eps, dtype=float)
    if np.any(~np.isfinite(eps_arr)) or np.any(eps_arr <= 0) or np.any(eps_arr >= c):
        raise ValueError(f"eps must lie in (0, c) = (0, {c}), got {eps!r}")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    alpha = 2.0 * np.sqrt(c * eps_arr)
    theta = c - eps_arr
    if theta.ndim == 0:
        eta = eta_value(t, s, float(theta))
    else:
        # eta_value wants a scalar theta; broadcast by hand
        theta_b, t_b, s_b = np.broadcast_arrays(theta, t, s)
        half_width = 1.0 / (2.0 * SQRT2 * theta_b)
        eta = np.where(
            np.abs(s_b) <= half_width,
            t_b / SQRT2 + theta_b * s_b**2 + 1.0 / (8.0 * theta_b),
            (t_b + np.abs(s_b)) / SQRT2,
        )
    out = np.asarray(_hinge_sq(alpha * t) / (4.0 * c) + eta)
    return out[()] if out.ndim == 0 else out


def dfb_upper_bound(T, c):
    """Leading term 1/(8 sqrt2 c^3 T^2) of the diagonal free-boundary distance.

    The true bound carries an additional O(1/(c^5 T^4)) remainder that is
    not included here.  Requires T >= 1/(2c).
    """
    _check_positive(c, "c")
    T = np.asarray(T, dtype=float)
    if np.any(T < 1.0 / (2.0 * c)):
        raise ValueError(f"T must be >= 1/(2c) = {1.0 / (2.0 * c)}, got {T!r}")
    out = 1.0 / (8.0 * SQRT2 * c**3 * T**2)
    return out[()] if out.ndim == 0 else out


def value_upper_bound_2d(x1, x2, c):
    """max(x1,0) + max(x2,0) + 1/(4c), an upper bound for u in two dimensions."""
    _check_positive(c, "c")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    out = np.maximum(x1, 0.0) + np.maximum(x2, 0.0) + 1.0 / (4.0 * c)
    return out[()] if out.ndim == 0 else out


def value_upper_bound(points, C):
    """Generic linear-growth bound sum_i |x_i| + C.

    The constant is not known in closed form for general d, so the caller
    supplies it.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.abs(points).sum(axis=-1) + C
