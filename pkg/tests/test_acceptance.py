"""Acceptance suite at full resolution.

Each test stores its verdict in ``conftest.ACCEPTANCE``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import numpy as np
import pytest

from conftest import ACCEPTANCE, masked
from parsearch.analytic import SQRT2, Cost, psi_value
from parsearch.boundary import boundary_points, diagonal_profile, half_width_at
from parsearch.grid import GridSpec
from parsearch.montecarlo import finite_horizon_oracle, simulate_stopping
from parsearch.solver import STOP, search_code, solve
from parsearch.verify import (
    VerifyConfig,
    VerifyContext,
    check_axis_distance,
    check_dfb,
    check_diagonal_lower_bound,
    check_inclusion,
    check_rd,
    check_sandwich,
    check_star_shaped,
)

pytestmark = pytest.mark.slow

COSTS = (0.5, 1.0, 2.0)


def record(n, ok, msg):
    ACCEPTANCE[n] = (bool(ok), msg)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {msg}")
    assert ok, msg


@pytest.fixture(scope="module")
def ctxs():
    """Default grids [-4/c, 8/c]^2 with h = 1/(80c)."""
    return {c: VerifyContext(VerifyConfig(c=c)) for c in COSTS}


@pytest.fixture(scope="module")
def ctx1(ctxs):
    return ctxs[1.0]


@pytest.fixture(scope="module")
def hybrid(ctx1):
    return solve(ctx1.grid, Cost(1.0, 2.0 / 3.0), "hybrid")


@pytest.fixture(scope="module")
def sequential_23(ctx1):
    return solve(ctx1.grid, Cost(2.0 / 3.0, 2.0 / 3.0), "sequential")


def test_c01_one_dimensional_smooth_pasting():
    h = 1 / 400
    sol = solve(GridSpec.cube(1, -2.0, 2.0, h), Cost(1.0), "parallel")
    edges = boundary_points(masked(sol))[:, 0]
    left, right = edges[edges < 0].max(), edges[edges > 0].min()
    err = max(abs(left + 0.25), abs(right - 0.25))
    u0 = sol.u.at((0.0,))
    ok = err <= 2 * h and abs(u0 - 0.0625) <= 1e-3
    record(1, ok, f"edges ({left:.4f}, {right:.4f}) err {err:.2e} <= {2 * h:.2e}; u(0) = {u0:.6f}")


def test_c02_axis_asymptote(ctxs):
    parts, ok = [], True
    for c, ctx in ctxs.items():
        res = check_axis_distance(ctx)
        ok &= res.passed
        parts.append(f"c={c}: err {res.details['max_error']:.2e}/{res.details['allowance']:.2e}")
    record(2, ok, "; ".join(parts))


def test_c03_diagonal_lower_bound(ctx1):
    res = check_diagonal_lower_bound(ctx1)
    d = res.details
    record(3, res.passed, f"min |x1-x2| = {d['min_abs_x1_minus_x2']:.4f} >= {d['bound']:.4f} over {d['nodes']} nodes")


def test_c04_asymptotic_rate(ctx1):
    res = check_dfb(ctx1)
    rows = ", ".join(f"T={r['T']:g}: {r['value']:.4f} <= {r['bound'] + r['allowance']:.4f}"
                     for r in res.details["rows"])
    record(4, res.passed, rows)


def test_c05_sandwich(ctx1):
    res = check_sandwich(ctx1)
    d = res.details
    record(5, res.passed, f"{d['samples']} samples t >= {d['t_min']:g}, tau {d['tau_num']:.4f}; "
                          f"excess lower {d['lower_excess']:.2e} upper {d['upper_excess']:.2e}")


def test_c06_star_shaped(ctxs):
    parts, ok = [], True
    for c, ctx in ctxs.items():
        res = check_star_shaped(ctx)
        ok &= res.passed and res.details["checked"] <= 10_000
        parts.append(f"c={c}: {res.details['n_violations']} of {res.details['checked']}")
    record(6, ok, "violations " + "; ".join(parts))


def test_c07_sequential_inclusion(ctx1):
    res = check_inclusion(ctx1)
    d = res.details
    record(7, res.passed, f"c'={d['cprime']}: {d['violations']} violations, strict={d['strict']}")


def test_c08_sequential_policy(ctx1):
    sol = ctx1.sequential
    cp = sol.cost.cprime
    grid = sol.grid
    x1, x2 = grid.mesh()
    acts = sol.policy.actions
    sel = ~grid.boundary_mask() & (acts != STOP) & (np.abs(x1 - x2) > 1e-12)
    leader = np.where(x1 > x2, search_code(1), search_code(2))
    frac = float(np.mean(acts[sel] == leader[sel]))
    h = grid.h
    prof = diagonal_profile(masked(sol), 2 * cp, T_values=())
    width = half_width_at(prof, 6.0, h)
    target = 1 / (4 * SQRT2 * cp)
    ok = frac >= 0.99 and abs(width - target) <= 3 * h
    record(8, ok, f"leader fraction {frac:.4f} over {int(sel.sum())} nodes; "
                  f"half-width {width:.4f} vs {target:.4f} (3h = {3 * h:.4f})")


def test_c09_hybrid_regime(ctx1, hybrid, sequential_23):
    grid = hybrid.grid
    x1, x2 = grid.mesh()
    acts = hybrid.policy.actions
    zone = (x1 >= 4) & (x2 >= 4) & (np.abs(x1 - x2) <= 0.3) & (acts != STOP)
    par_ok = bool(zone.any() and np.all(acts[zone] == 1))
    floor = np.maximum(ctx1.parallel.u.values, sequential_23.u.values)
    gap = float(np.min(hybrid.u.values - floor))
    ok = par_ok and gap >= -1e-8
    record(9, ok, f"PARALLEL at {int(np.sum(acts[zone] == 1))}/{int(zone.sum())} zone nodes; "
                  f"min(u_h - max(u_par, u_seq)) = {gap:.2e}")


def test_c10_rd_values(ctx1):
    res = check_rd(ctx1)
    est = {e["d"]: e for e in res.details["estimates"]}
    msg = ", ".join(f"r{d} = {e['r_d']:.4f} [{e['bracket'][0]:.4f}, {e['bracket'][1]:.4f}]"
                    for d, e in est.items())
    record(10, res.passed, msg)


def test_c11_monte_carlo_and_oracle(ctx1):
    mask = ctx1.parallel_mask
    u = ctx1.parallel.u
    parts, ok = [], True
    for p in [(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)]:
        est = simulate_stopping(p, mask, Cost(1.0), dt=1e-4, paths=200_000, seed=2024)
        diff = abs(est.mean - u.at(p))
        allow = 3 * est.stderr + 0.02
        ok &= diff <= allow
        parts.append(f"{p}: |{est.mean:.4f} - {u.at(p):.4f}| <= {allow:.4f}")
    for x in (-0.1, 0.0, 0.1):
        v = finite_horizon_oracle((x,), 1.0, 0.01, 10_000)
        err = abs(v - psi_value(x, 1.0))
        ok &= err <= 1e-2
        parts.append(f"oracle x={x}: err {err:.1e}")
    record(11, ok, "; ".join(parts))


def test_c12_property_suite(ctx1, ctxs, hybrid, sequential_23):
    failures = []
    for sol in (ctx1.parallel, ctx1.sequential, hybrid, sequential_23, *(c.parallel for c in ctxs.values())):
        if not np.all(sol.u.values >= sol.g.values):
            failures.append(f"dominance {sol.mode}")

    common = GridSpec.cube(2, -4.0, 8.0, 1 / 80)
    fields = [ctx1.parallel.u.values if c == 1.0 else solve(common, Cost(c), "parallel").u.values for c in COSTS]
    if not all(np.all(a >= b - 1e-9) for a, b in zip(fields, fields[1:])):
        failures.append("cost monotonicity")

    u = ctx1.parallel.u.values
    asym = float(np.max(np.abs(u - u.T)))
    if asym > 1e-8:
        failures.append(f"symmetry {asym:.1e}")

    probes = [(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)]
    vals = np.array([[solve(GridSpec.cube(2, -2.0, 4.0, h), Cost(1.0), "parallel").u.at(p) for p in probes]
                     for h in (1 / 20, 1 / 40, 1 / 80)])
    inc1, inc2 = np.abs(vals[1] - vals[0]), np.abs(vals[2] - vals[1])
    if not np.all(inc2 <= inc1 / 2 + 1e-12):
        failures.append("refinement")

    again = solve(ctx1.grid, Cost(1.0), "parallel")
    if not np.array_equal(again.u.values, u):
        failures.append("reproducibility")

    record(12, not failures, "all five properties hold" if not failures else ", ".join(failures)
           + f"; symmetry {asym:.1e}, refinement ratios {np.round(inc2 / np.maximum(inc1, 1e-300), 3).tolist()}")
