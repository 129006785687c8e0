"""Plot the value gap u - g and the free boundary from a ``parsearch solve`` output directory.

usage: python3 scripts/plot_run.py OUT_DIR [--png FILE]
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from parsearch import io  # noqa: E402
from parsearch.grid import build_obstacle  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--png", default=None)
    args = ap.parse_args()
    out = Path(args.out)
    diag = json.loads((out / "diagnostics.json").read_text())
    grid = io.grid_from_json(diag["grid"])
    if grid.d != 2:
        raise SystemExit("only two-dimensional runs can be plotted")
    u, contact = io.read_field_csv(out / "field.csv", grid)
    gap = u - build_obstacle(grid).values
    x, y = grid.axis(0), grid.axis(1)

    fig, ax = plt.subplots(figsize=(6, 5))
    mesh = ax.pcolormesh(x, y, gap.T, shading="auto", cmap="viridis")
    ax.contour(x, y, contact.T.astype(float), levels=[0.5], colors="w", linewidths=0.8)
    fig.colorbar(mesh, ax=ax, label="u - g")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    ax.set_title(f"{diag['mode']}  c={diag['cost']['c']:g}  h={grid.h:g}")
    target = Path(args.png) if args.png else out / "field.png"
    fig.savefig(target, dpi=150, bbox_inches="tight")
    print(target)


if __name__ == "__main__":
    main()
