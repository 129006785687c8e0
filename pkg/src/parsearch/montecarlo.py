"""Path simulation of solved stopping rules and a lattice backward-induction oracle.

Random numbers come from numpy's Philox (counter-based).  Paths are grouped
in fixed blocks of BLOCK paths and block b draws from the stream keyed by
SeedSequence(seed, spawn_key=(b,)).  Whole blocks are always simulated and
surplus paths discarded, so raising ``paths`` never changes the paths that
were already there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .analytic import Cost
from .grid import ContactMask, obstacle_values
from .solver import PARALLEL, STOP, PolicyField

log = logging.getLogger(__name__)

BLOCK = 1024
CHUNK = 64
FORCED_WARN = 0.01
ORACLE_MAX_NODES = 50_000_000


@dataclass
class SimEstimate:
    mean: float
    stderr: float
    mean_tau: float
    paths: int
    seed: int
    dt: float
    forced_fraction: float = 0.0
    warning: str = ""

    def to_json(self):
        return {
            "mean": float(self.mean),
            "stderr": float(self.stderr),
            "mean_tau": float(self.mean_tau),
            "paths": int(self.paths),
            "seed": int(self.seed),
            "dt": float(self.dt),
            "forced_fraction": float(self.forced_fraction),
            "warning": self.warning,
        }


@njit(cache=True)
def _advance(x, cost_acc, tau, alive, forced, normals, actions, lower, h, counts, strides,
             sqdt, dt, c, cprime, t_cap):
    n, d = x.shape
    steps = normals.shape[1]
    for p in range(n):
        if not alive[p]:
            continue
        for k in range(steps + 1):
            flat = 0
            for a in range(d):
                i = int(math.floor((x[p, a] - lower[a]) / h + 0.5))
                if i < 0:
                    i = 0
                elif i > counts[a] - 1:
                    i = counts[a] - 1
                flat += i * strides[a]
            act = actions[flat]
            if act == STOP:
                alive[p] = False
                break
            if tau[p] + dt > t_cap * (1.0 + 1e-12):
                alive[p] = False
                forced[p] = True
                break
            if k == steps:
                break
            if act == PARALLEL:
                for a in range(d):
                    x[p, a] += sqdt * normals[p, k, a]
                cost_acc[p] += c * dt
            else:
                a = act - 2
                x[p, a] += sqdt * normals[p, k, a]
                cost_acc[p] += cprime * dt
            tau[p] += dt


def _action_table(rule):
    if isinstance(rule, PolicyField):
        return rule.grid, rule.actions.ravel().astype(np.int8), rule.mode
    if isinstance(rule, ContactMask):
        acts = np.where(rule.mask, STOP, PARALLEL).astype(np.int8)
        return rule.grid, acts.ravel(), "parallel"
    raise TypeError("rule must be a ContactMask or a PolicyField")


def _run_block(x0, block, seed, n_keep, table, grid, dt, cost, t_cap):
    d = grid.d
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))
    x = np.tile(np.asarray(x0, dtype=float), (BLOCK, 1))
    cost_acc = np.zeros(BLOCK)
    tau = np.zeros(BLOCK)
    alive = np.ones(BLOCK, dtype=bool)
    forced = np.zeros(BLOCK, dtype=bool)
    lower = np.asarray(grid.lower)
    counts = np.asarray(grid.counts, dtype=np.int64)
    strides = grid.strides()
    cprime = cost.cprime if cost.cprime is not None else cost.c
    while alive.any():
        live = np.flatnonzero(alive)
        normals = gen.standard_normal((live.size, CHUNK, d))
        xs, cs, ts = x[live], cost_acc[live], tau[live]
        al, fo = alive[live], forced[live]
        _advance(xs, cs, ts, al, fo, normals, table, lower, grid.h, counts, strides,
                 math.sqrt(dt), dt, cost.c, cprime, t_cap)
        x[live], cost_acc[live], tau[live] = xs, cs, ts
        alive[live], forced[live] = al, fo
    payoff = obstacle_values(x) - cost_acc
    return payoff[:n_keep], tau[:n_keep], forced[:n_keep]


def simulate_stopping(x0, rule, cost, dt=1e-4, paths=200_000, seed=0, t_cap=None):
    """Estimate E[g(X_tau) - cost * tau] under a solved stopping rule.

    ``rule`` is a ContactMask (parallel search until contact) or a
    PolicyField (per-node STOP / PARALLEL / SEARCH_i).  Contact is checked
    at the nearest grid node before every Euler step, so entry is detected
    only at step granularity; the resulting O(sqrt(dt)) bias is not
    corrected.  Paths still running at ``t_cap`` (default 50/c) are stopped
    and paid g at their current state.
    """
    cost = cost if isinstance(cost, Cost) else Cost(float(cost))
    if not dt > 0:
        raise ValueError("dt must be positive")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    grid, table, mode = _action_table(rule)
    x0 = np.asarray(x0, dtype=float)
    if not grid.contains(x0):
        raise ValueError(f"x0={x0.tolist()} lies outside the grid")
    if mode != "parallel" and cost.cprime is None:
        raise ValueError("a sequential or hybrid policy needs cost.cprime")
    t_cap = 50.0 / cost.c if t_cap is None else float(t_cap)
    if not np.isfinite(t_cap) or t_cap <= 0:
        raise ValueError("t_cap must be positive and finite")

    n_blocks = -(-paths // BLOCK)
    pay, taus, forced = [], [], []
    for b in range(n_blocks):
        keep = min(BLOCK, paths - b * BLOCK)
        p_, t_, f_ = _run_block(x0, b, seed, keep, table, grid, dt, cost, t_cap)
        pay.append(p_)
        taus.append(t_)
        forced.append(f_)
    pay = np.concatenate(pay)
    taus = np.concatenate(taus)
    forced = np.concatenate(forced)
    stderr = float(pay.std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    frac = float(forced.mean())
    warning = ""
    if frac > FORCED_WARN:
        warning = f"{frac:.2%} of paths hit t_cap; the estimate is biased downward"
        log.warning(warning)
    return SimEstimate(
        mean=float(pay.sum() / paths), stderr=stderr, mean_tau=float(taus.sum() / paths),
        paths=int(paths), seed=int(seed), dt=float(dt), forced_fraction=frac, warning=warning,
    )


def _snap(x0, h):
    x0 = np.asarray(x0, dtype=float)
    snapped = h * np.rint(x0 / h)
    return snapped, float(np.abs(snapped - x0).max())


def finite_horizon_oracle(x0, c, h, steps, max_nodes=ORACLE_MAX_NODES, return_snap=False):
    """Backward induction for the lattice random walk that each coordinate follows.

    Every period each coordinate moves +-h independently with probability
    1/2 and the period costs c h^2.  V_k = max(g, E[V_{k+1}] - c h^2) with
    V_steps = g.  Only the cone reachable from x0 is stored.  x0 is snapped
    to the lattice h Z^d so the kinks of g sit on lattice points.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not h > 0:
        raise ValueError("h must be positive")
    if not c > 0:
        raise ValueError("c must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    width = 2 * steps + 1
    if width**d > max_nodes:
        # largest steps fitting the budget at this h
        fit = int((max_nodes ** (1.0 / d) - 1) // 2)
        raise MemoryError(
            f"oracle cone of {width}^{d} nodes exceeds the budget of {max_nodes}; "
            f"use steps <= {fit} or a larger h (horizon steps*h^2 = {steps * h * h:g})"
        )
    centre, snap = _snap(x0, h)
    if snap > 0:
        log.info("oracle start snapped by %.3g to the lattice", snap)
    offsets = h * np.arange(-steps, steps + 1)
    axes = [centre[a] + offsets for a in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    g_full = np.maximum(np.maximum.reduce(mesh), 0.0)
    V = g_full.copy()
    ch2 = c * h * h
    for m in range(steps - 1, -1, -1):
        # shrink every axis by one on each side: neighbours of the stage-m cone
        for a in range(d):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[a] = slice(None, -2)
            hi[a] = slice(2, None)
            V = 0.5 * (V[tuple(lo)] + V[tuple(hi)])
        k = steps - m
        inner = tuple(slice(k, width - k) for _ in range(d))
        V = np.maximum(g_full[inner], V - ch2)
    value = float(V.reshape(-1)[0]) if steps > 0 else float(np.maximum(centre.max(), 0.0))
    return (value, snap) if return_snap else value
