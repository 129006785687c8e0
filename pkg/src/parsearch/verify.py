"""Invariant checks on solved fields, shared by ``parsearch verify`` and the tests.

Every mesh allowance is multiplied by ``VerifyConfig.allowance_scale``;
setting it to 0 turns the suite into a fault-injection run in which checks
that depend on an allowance must fail.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analytic import SQRT2, Cost, dfb_upper_bound, eta_value, phi_upper, to_rotated
from .boundary import (
    axis_distance,
    boundary_points,
    contact_set,
    diagonal_profile,
    region_inclusion,
    star_shaped_check,
)
from .grid import default_eps_contact, default_grid
from .highdim import build_chart, estimate_rd, rd_inequality_check, solve_wd
from .solver import SolverConfig, solve

log = logging.getLogger(__name__)


@dataclass
class VerifyConfig:
    c: float = 1.0
    cprime: Optional[float] = None  # sequential cost for the inclusion check; default c/2
    h: Optional[float] = None  # default 1/(80c)
    grid: object = None  # overrides the default box when given
    probe_x2: tuple = ()  # default (-3/c,)
    T_values: tuple = (1.0, 2.0)
    tau_num_factor: float = 5.0
    allowance_scale: float = 1.0
    n_rays: int = 10_000
    rd_max_d: int = 3
    chart_h: Optional[float] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.allowance_scale < 0:
            raise ValueError("allowance_scale must be >= 0")
        if not 1 <= self.rd_max_d <= 4:
            raise ValueError("rd_max_d must be in 1..4")

    @property
    def seq_cost(self):
        return self.c / 2.0 if self.cprime is None else self.cprime

    def make_grid(self):
        return self.grid if self.grid is not None else default_grid(2, self.c, self.h)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"name": self.name, "passed": bool(self.passed), "details": self.details}


class VerifyContext:
    """Lazily solved fields shared between checks."""

    def __init__(self, config: VerifyConfig):
        self.config = config
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def grid(self):
        return self._get("grid", self.config.make_grid)

    @property
    def parallel(self):
        return self._get("parallel", lambda: solve(self.grid, Cost(self.config.c), "parallel",
                                                   cfg=self.config.solver))

    @property
    def parallel_mask(self):
        def build():
            sol = self.parallel
            eps = default_eps_contact(sol.cost, "parallel", self.grid.h)
            return contact_set(sol.u, sol.g, eps)
        return self._get("parallel_mask", build)

    @property
    def sequential(self):
        cp = self.config.seq_cost
        return self._get("sequential", lambda: solve(self.grid, Cost(cp, cp), "sequential",
                                                     cfg=self.config.solver))

    @property
    def sequential_mask(self):
        def build():
            sol = self.sequential
            eps = default_eps_contact(sol.cost, "sequential", self.grid.h)
            return contact_set(sol.u, sol.g, eps)
        return self._get("sequential_mask", build)

    @property
    def profile(self):
        return self._get("profile", lambda: diagonal_profile(self.parallel_mask, self.config.c,
                                                             self.config.T_values))

    def wd(self, d):
        def build():
            c = self.config.c
            if d == 1:
                return solve_wd(None, c, cfg=self.config.solver)
            grid = None
            if self.config.chart_h is not None:
                from .highdim import default_chart_grid
                grid = default_chart_grid(d, c, h=self.config.chart_h)
            lower = self.wd(d - 1) if d >= 4 else None
            return solve_wd(build_chart(d), c, grid=grid, cfg=self.config.solver, lower=lower)
        return self._get(("wd", d), build)


# ---------------------------------------------------------------- checks


def check_axis_distance(ctx):
    cfg = ctx.config
    c, h = cfg.c, ctx.grid.h
    probes = cfg.probe_x2 or (-3.0 / cfg.c,)
    edges = axis_distance(ctx.parallel_mask, c, probes)
    target = 1.0 / (4.0 * c)
    allow = 2.0 * h * cfg.allowance_scale
    err = np.abs(np.abs(edges) - target)
    rows = [{"x2": float(x2), "left": float(lf), "right": float(rt)} for x2, (lf, rt) in zip(probes, edges)]
    return CheckResult("axis_distance", bool(np.all(err <= allow + 1e-12)),
                       {"target": target, "allowance": allow, "max_error": float(err.max()), "edges": rows})


def check_diagonal_lower_bound(ctx):
    cfg = ctx.config
    h = ctx.grid.h
    pts = boundary_points(ctx.parallel_mask)
    t = (pts[:, 0] + pts[:, 1]) / SQRT2
    gap = np.abs(pts[:, 0] - pts[:, 1])[t >= 0]
    bound = 1.0 / (2.0 * cfg.c) - 2.0 * h * cfg.allowance_scale
    worst = float(gap.min()) if gap.size else float("inf")
    return CheckResult("diagonal_lower_bound", bool(worst >= bound - 1e-12),
                       {"min_abs_x1_minus_x2": worst, "bound": bound, "nodes": int(gap.size)})


def check_dfb(ctx):
    cfg = ctx.config
    prof = ctx.profile
    h = ctx.grid.h
    rows = []
    ok = True
    for T in cfg.T_values:
        value = prof.dfb(T)
        lead = dfb_upper_bound(T, cfg.c)
        # higher-order term of the expansion taken as 1/(c^5 T^4)
        allow = (2.0 * h + 1.0 / (cfg.c**5 * T**4)) * cfg.allowance_scale
        passed = value <= lead + allow
        ok &= passed
        rows.append({"T": T, "value": value, "bound": lead, "allowance": allow, "passed": bool(passed)})
    return CheckResult("d_fb", bool(ok), {"rows": rows})


def sandwich_violations(u, c, tau_num, t_min):
    """Largest violations of eta_c - tau <= u <= phi_eps + tau with eps = 1/(4 c t^2)."""
    grid = u.grid
    pts = grid.points()
    interior = ~grid.boundary_mask().ravel()
    t, s = to_rotated(pts[:, 0], pts[:, 1])
    sel = interior & (t >= t_min)
    t, s, uv = t[sel], s[sel], u.values.ravel()[sel]
    eps = 1.0 / (4.0 * c * t**2)
    lower = eta_value(t, s, c) - tau_num
    upper = phi_upper(t, s, c, eps) + tau_num
    return {
        "samples": int(sel.sum()),
        "lower_excess": float(np.max(lower - uv)),
        "upper_excess": float(np.max(uv - upper)),
    }


def check_sandwich(ctx):
    cfg = ctx.config
    h = ctx.grid.h
    tau = cfg.tau_num_factor * h * cfg.allowance_scale
    # eps = 1/(4 c t^2) must stay below c, which needs t > 1/(2c)
    t_min = max(1.0, 1.0 / cfg.c)
    info = sandwich_violations(ctx.parallel.u, cfg.c, tau, t_min)
    info.update(tau_num=tau, t_min=t_min)
    passed = info["lower_excess"] <= 1e-12 and info["upper_excess"] <= 1e-12
    return CheckResult("sandwich", bool(passed), info)


def check_star_shaped(ctx):
    cfg = ctx.config
    mask = ctx.parallel_mask
    sol = ctx.parallel
    allowance = 4.0 * mask.eps_contact * cfg.allowance_scale
    rep = star_shaped_check(mask, sol.u, sol.g, n_rays=cfg.n_rays, allowance=allowance)
    details = rep.to_json()
    details["violations"] = details["violations"][:20]
    details["n_violations"] = len(rep.violations)
    if rep.warning:
        details["warning"] = rep.warning
    return CheckResult("star_shaped", rep.passed and rep.checked > 0, details)


def check_inclusion(ctx):
    ok, bad = region_inclusion(ctx.parallel_mask, ctx.sequential_mask)
    strict = bool(np.any(~ctx.sequential_mask.mask & ctx.parallel_mask.mask))
    return CheckResult("inclusion", bool(ok and strict), {
        "cprime": ctx.config.seq_cost,
        "violations": int(len(bad)),
        "strict": strict,
    })


def check_rd(ctx):
    cfg = ctx.config
    ests = [estimate_rd(ctx.wd(d)) for d in range(1, cfg.rd_max_d + 1)]
    rows = [e.to_json() for e in ests]
    ok = True
    targets = {1: 1.0 / (4.0 * cfg.c), 2: 1.0 / (2.0 * SQRT2 * cfg.c)}
    for e, row in zip(ests, rows):
        if e.d in targets:
            err = abs(e.r_d - targets[e.d])
            allow = 2.0 * e.h * cfg.allowance_scale
            row.update(target=targets[e.d], error=err, passed=bool(err <= allow + 1e-12))
            ok &= row["passed"]
    ineq = rd_inequality_check(ests)
    ok &= ineq.passed
    return CheckResult("r_d", bool(ok), {"estimates": rows, "inequality_checks": ineq.items})


CHECKS = {
    "sandwich": check_sandwich,
    "star_shaped": check_star_shaped,
    "axis_distance": check_axis_distance,
    "diagonal_lower_bound": check_diagonal_lower_bound,
    "d_fb": check_dfb,
    "inclusion": check_inclusion,
    "r_d": check_rd,
}


def run_checks(config: VerifyConfig, only=None, context: Optional[VerifyContext] = None):
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; choose from {sorted(CHECKS)}")
    ctx = context or VerifyContext(config)
    results = []
    for name in names:
        res = CHECKS[name](ctx)
        log.info("%s: %s", name, "pass" if res.passed else "FAIL")
        results.append(res)
    return results
