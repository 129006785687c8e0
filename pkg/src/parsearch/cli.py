"""Command-line entry point: ``parsearch {solve,verify,simulate,highdim}``.

Settings come from flags, optionally seeded by ``--config FILE`` holding
``key = value`` lines (keys are flag names without the leading dashes;
repeatable flags take ``;``-separated values).  Flags override the file.
The output directory defaults to ``$PARSEARCH_OUT`` or ``./out``.

Exit codes: 0 success, 1 failed checks, 2 configuration error, 3 solver
non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


from . import io
from .analytic import Cost
from .boundary import axis_distance, boundary_points, contact_set, diagonal_profile, star_shaped_check
from .grid import (
    MODES,
    ContactMask,
    default_eps_contact,
    default_grid,
    grid_from_extents,
    truncation_boundary_values,
)
from .highdim import (
    build_chart,
    default_chart_grid,
    estimate_rd,
    rd_inequality_check,
    solve_wd,
    wd_monotonicity_check,
)
from .montecarlo import simulate_stopping
from .solver import NonConvergenceError, PolicyField, SolverConfig, lcp_residual, solve
from .verify import CHECKS, VerifyConfig, run_checks

log = logging.getLogger("parsearch")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4
OUT_ENV = "PARSEARCH_OUT"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    mode: str = "parallel"
    d: int = 2
    c: float = 1.0
    cprime: Optional[float] = None
    xmin: list = field(default_factory=list)
    xmax: list = field(default_factory=list)
    h: Optional[float] = None
    tol: Optional[float] = None
    residual_tol: Optional[float] = None
    omega: Optional[float] = None
    max_iters: int = 200_000
    eps_contact: Optional[float] = None
    dt: float = 1e-4
    paths: int = 200_000
    seed: int = 0
    t_cap: Optional[float] = None
    probe: list = field(default_factory=list)
    out: str = "out"
    only: list = field(default_factory=list)
    solve_first: bool = False
    allowance_scale: float = 1.0

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"--mode must be one of {MODES}")
        if self.d < 1:
            raise ConfigError("--d must be >= 1")
        if not self.c > 0:
            raise ConfigError("--c must be positive")
        if self.cprime is not None and not self.cprime > 0:
            raise ConfigError("--cprime must be positive")
        if self.mode in ("sequential", "hybrid") and self.cprime is None:
            raise ConfigError(f"--mode {self.mode} needs --cprime")
        if self.mode == "hybrid" and not (self.c / 2 < self.cprime < self.c):
            raise ConfigError(
                f"hybrid search needs c/2 < cprime < c; got c={self.c}, cprime={self.cprime}"
            )
        if self.h is not None and not self.h > 0:
            raise ConfigError("--h must be positive")
        for name in ("tol", "residual_tol", "eps_contact", "t_cap"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"--{name.replace('_', '-')} must be positive")
        if self.omega is not None and not 1.0 <= self.omega < 2.0:
            raise ConfigError("--omega must lie in [1, 2)")
        if not self.dt > 0:
            raise ConfigError("--dt must be positive")
        if self.paths < 1:
            raise ConfigError("--paths must be >= 1")
        for p in self.probe:
            if len(p) != self.d:
                raise ConfigError(f"probe {p} needs {self.d} coordinates")
        unknown = [n for n in self.only if n not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown check(s) {unknown}; choose from {sorted(CHECKS)}")
        if self.command == "highdim" and not 1 <= self.d <= 4:
            raise ConfigError("highdim runs chart solves for d <= 4")
        return self

    def solver_config(self):
        return SolverConfig(tol=self.tol, residual_tol=self.residual_tol, omega=self.omega,
                            max_iters=self.max_iters)

    def grid(self):
        if self.xmin or self.xmax:
            if not (self.xmin and self.xmax):
                raise ConfigError("give both --xmin and --xmax")
            h = self.h if self.h is not None else 1.0 / (80.0 * self.c)
            return grid_from_extents(self.xmin, self.xmax, h, self.d)
        if self.d == 1:
            h = self.h if self.h is not None else 1.0 / (400.0 * self.c)
            return default_grid(1, self.c, h, lower=-2.0, upper=2.0)
        return default_grid(self.d, self.c, self.h)

    def to_json(self):
        out = {k: v for k, v in self.__dict__.items() if k not in ("out",)}
        return out


# ---------------------------------------------------------------- parsing


def _point(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}; expected x1,x2,...") from None


def _flag_set(text):
    return text.lower() in ("1", "true", "yes", "on")


def read_config_file(path):
    """Parse ``key = value`` lines into flag-name -> list of string values."""
    entries = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key.replace("_", "-")] = [v.strip() for v in value.split(";") if v.strip()]
    return entries


def _add_common(p):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--d", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--cprime", type=float)
    p.add_argument("--xmin", type=float, action="append", help="repeat once per axis, or once for all")
    p.add_argument("--xmax", type=float, action="append")
    p.add_argument("--h", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--eps-contact", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t-cap", type=float)
    p.add_argument("--probe", type=_point, action="append", help='"x1,x2,..."; repeatable')
    p.add_argument("--out")
    p.add_argument("--only", action="append", help="verify: run only this check; repeatable")
    p.add_argument("--solve-first", action="store_true", default=None)
    p.add_argument("--allowance-scale", type=float, help="verify: scale all mesh allowances")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="parsearch", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve the obstacle problem and write field/boundary artifacts"),
        ("verify", "run the invariant suite and write verify.json"),
        ("simulate", "Monte Carlo estimates of a solved stopping rule at probe points"),
        ("highdim", "chart solves for w_d and r_d estimates"),
    ):
        _add_common(sub.add_parser(name, help=help_))
    return parser


_CASTS = {
    "mode": str, "d": int, "c": float, "cprime": float, "h": float, "tol": float,
    "residual-tol": float, "omega": float, "max-iters": int, "eps-contact": float, "dt": float,
    "paths": int, "seed": int, "t-cap": float, "out": str, "allowance-scale": float,
}
_LISTS = {"xmin": float, "xmax": float, "probe": _point, "only": str}


def parse_config(argv):
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        for key, vals in read_config_file(args.config).items():
            try:
                if key in _CASTS:
                    values[key.replace("-", "_")] = _CASTS[key](vals[-1])
                elif key in _LISTS:
                    values[key] = [_LISTS[key](v) for v in vals]
                elif key == "solve-first":
                    values["solve_first"] = _flag_set(vals[-1])
                else:
                    raise ConfigError(f"unknown key {key!r} in {args.config}")
            except (ValueError, argparse.ArgumentTypeError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key!r} in {args.config}: {exc}") from exc
    for key, val in vars(args).items():
        if key in ("config", "command", "verbose") or val is None:
            continue
        values[key] = val
    if "out" not in values:
        values["out"] = os.environ.get(OUT_ENV, "out")
    cfg = RunConfig(command=args.command, **values)
    return cfg.validate(), args.verbose


# ---------------------------------------------------------------- commands


def _probes(cfg):
    if cfg.probe:
        return [list(p) for p in cfg.probe]
    return [[0.0] * cfg.d]


def _run_solve(cfg):
    grid = cfg.grid()
    cost = Cost(cfg.c, cfg.cprime) if cfg.mode != "sequential" else Cost(cfg.cprime, cfg.cprime)
    if cfg.mode == "hybrid":
        cost.check_hybrid()
    bc = truncation_boundary_values(grid, cost, cfg.mode)
    sol = solve(grid, cost, cfg.mode, bc=bc, cfg=cfg.solver_config())
    eps = cfg.eps_contact if cfg.eps_contact is not None else default_eps_contact(cost, cfg.mode, grid.h)
    mask = contact_set(sol.u, sol.g, eps)
    return grid, cost, sol, mask


def _boundary_report(sol, mask, cfg):
    # axis band set by the cheapest single-coordinate search; diagonal
    # channel curvature as in the far-field envelope (hybrid is parallel there)
    axis_cost = cfg.c if cfg.mode == "parallel" else cfg.cprime
    theta = 2.0 * cfg.cprime if cfg.mode == "sequential" else cfg.c
    payload = {"c": cfg.c, "h": mask.grid.h, "eps_contact": mask.eps_contact, "mode": cfg.mode,
               "axis_distance": [], "s_star": [], "d_fb": [],
               "star_shaped": {"checked": 0, "violations": []}}
    profile = None
    if mask.grid.d == 2:
        probe = -3.0 / axis_cost
        if mask.grid.lower[1] < probe:
            try:
                edges = axis_distance(mask, axis_cost, [probe])
                payload["axis_distance"] = [{"x2": probe, "left": edges[0, 0], "right": edges[0, 1]}]
            except ValueError as exc:
                log.warning("axis distance skipped: %s", exc)
        T_values = [T for T in (1.0, 2.0) if T >= 1 / (2 * cfg.c)] if cfg.mode == "parallel" else []
        profile = diagonal_profile(mask, theta, T_values=T_values)
        star = star_shaped_check(mask, sol.u, sol.g) if cfg.mode == "parallel" else None
        payload.update(profile.to_json(star))
        payload["c"] = cfg.c
        payload["mode"] = cfg.mode
    elif cfg.mode == "parallel":
        payload["star_shaped"] = star_shaped_check(mask, sol.u, sol.g).to_json()
    return payload, profile


def cmd_solve(cfg):
    out = Path(cfg.out)
    grid, cost, sol, mask = _run_solve(cfg)
    out.mkdir(parents=True, exist_ok=True)
    io.write_field_csv(out / "field.csv", sol.u, sol.g, mask)
    io.write_points_csv(out / "boundary_nodes.csv", boundary_points(mask), io.coord_names(grid.d))
    if sol.policy is not None:
        io.write_policy_csv(out / "policy.csv", sol.policy)
    boundary, profile = _boundary_report(sol, mask, cfg)
    if profile is not None:
        io.write_profile_csv(out / "diagonal_profile.csv", profile)
    io.write_json(out / "boundary.json", boundary)
    diagnostics = {
        "config": cfg.to_json(),
        "grid": io.grid_to_json(grid),
        "mode": cfg.mode,
        "cost": {"c": cost.c, "cprime": cost.cprime},
        "eps_contact": mask.eps_contact,
        "solver": sol.report.to_json(),
        "lcp_residual": lcp_residual(sol.u, sol.g.values, cost, cfg.mode),
        "contact_nodes": int(mask.mask.sum()),
        "probes": [{"x": p, "u": sol.u.at(p), "g": sol.g.at(p)} for p in _probes(cfg) if grid.contains(p)],
    }
    io.write_json(out / "diagnostics.json", diagnostics, io.meta(sol.report.wall_time))
    print(f"{cfg.mode} solve converged in {sol.report.iterations} sweeps; artifacts in {out}")
    return EXIT_OK


def cmd_verify(cfg):
    vcfg = VerifyConfig(c=cfg.c, cprime=cfg.cprime, h=cfg.h, solver=cfg.solver_config(),
                        allowance_scale=cfg.allowance_scale)
    if cfg.xmin or cfg.xmax:
        vcfg.grid = grid_from_extents(cfg.xmin, cfg.xmax, cfg.h or 1 / (80 * cfg.c), 2)
    start = time.perf_counter()
    results = run_checks(vcfg, only=cfg.only or None)
    ok = all(r.passed for r in results)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "c": cfg.c,
        "passed": ok,
        "checks": [r.to_json() for r in results],
        "failed": [r.name for r in results if not r.passed],
    }
    io.write_json(out / "verify.json", payload, io.meta(time.perf_counter() - start))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}")
    return EXIT_OK if ok else EXIT_FAIL


def _load_rule(cfg):
    out = Path(cfg.out)
    diag_path = out / "diagnostics.json"
    if not diag_path.exists() or not (out / "field.csv").exists():
        raise ConfigError(f"no solve artifacts in {out}; run `parsearch solve` first or pass --solve-first")
    diag = json.loads(diag_path.read_text())
    grid = io.grid_from_json(diag["grid"])
    mode = diag["mode"]
    cost = Cost(diag["cost"]["c"], diag["cost"]["cprime"])
    u, contact = io.read_field_csv(out / "field.csv", grid)
    if mode == "parallel":
        rule = ContactMask(grid, contact, diag["eps_contact"])
    else:
        if not (out / "policy.csv").exists():
            raise ConfigError(f"{out / 'policy.csv'} is missing for a {mode} solve")
        rule = PolicyField(grid, io.read_policy_csv(out / "policy.csv", grid), mode)
    return grid, cost, mode, rule, u


def cmd_simulate(cfg):
    if cfg.solve_first:
        cmd_solve(cfg)
    grid, cost, mode, rule, u = _load_rule(cfg)
    probes = _probes(cfg)
    rows = []
    for p in probes:
        if len(p) != grid.d:
            raise ConfigError(f"probe {p} does not match the solved dimension {grid.d}")
        est = simulate_stopping(p, rule, cost, dt=cfg.dt, paths=cfg.paths, seed=cfg.seed, t_cap=cfg.t_cap)
        solver_u = float(u[grid.nearest_index(p)])
        rows.append({"x": p, "estimate": est.to_json(), "solver_u": solver_u,
                     "difference": est.mean - solver_u})
        print(f"x={p}: MC {est.mean:.6f} +- {est.stderr:.6f}, solver {solver_u:.6f}")
    payload = {"mode": mode, "c": cost.c, "cprime": cost.cprime, "probes": rows}
    io.write_json(Path(cfg.out) / "simulate.json", payload)
    return EXIT_OK


def cmd_highdim(cfg):
    sols = {}
    ests = []
    for d in range(1, cfg.d + 1):
        # --h sets the chart mesh of the top dimension only
        grid = default_chart_grid(d, cfg.c, h=cfg.h) if (cfg.h is not None and d == cfg.d) else None
        if d == 1:
            sols[d] = solve_wd(None, cfg.c, grid=grid, cfg=cfg.solver_config())
        else:
            sols[d] = solve_wd(build_chart(d), cfg.c, grid=grid, cfg=cfg.solver_config(), lower=sols[d - 1])
        ests.append(estimate_rd(sols[d]))
    ineq = rd_inequality_check(ests)
    mono = [{"d": d, "passed": wd_monotonicity_check(sols[d], sols[d - 1])} for d in range(2, cfg.d + 1)]
    top = ests[-1]
    payload = {
        "d": top.d, "c": cfg.c, "r_d": top.r_d, "bracket": list(top.bracket),
        "estimates": [e.to_json() for e in ests],
        "inequality_checks": ineq.items,
        "monotonicity": "pass" if ineq.passed and all(m["passed"] for m in mono) else "fail",
        "wd_monotonicity": mono,
    }
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "highdim.json", payload)
    for e in ests:
        print(f"r_{e.d} = {e.r_d:.5f}  bracket [{e.bracket[0]:.5f}, {e.bracket[1]:.5f}]")
    return EXIT_OK if payload["monotonicity"] == "pass" else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "simulate": cmd_simulate, "highdim": cmd_highdim}


def main(argv=None):
    try:
        cfg, verbose = parse_config(argv)
    except ConfigError as exc:
        print(f"parsearch: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[cfg.command](cfg)
    except NonConvergenceError as exc:
        print(f"parsearch: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError, MemoryError) as exc:
        print(f"parsearch: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"parsearch: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
