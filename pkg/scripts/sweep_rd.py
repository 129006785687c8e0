"""Chart-radius sweep: r_d for d = 1..4 at a few mesh widths, printed as JSON lines.

usage: python3 scripts/sweep_rd.py [--c 1.0] [--max-d 4]
"""

import argparse
import json
import time

from parsearch.highdim import build_chart, default_chart_grid, estimate_rd, solve_wd

MESHES = {1: (1 / 100, 1 / 200, 1 / 400), 2: (1 / 100, 1 / 200, 1 / 400), 3: (1 / 20, 1 / 40, 1 / 80),
          4: (1 / 10, 1 / 20)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--max-d", type=int, default=4, choices=(1, 2, 3, 4))
    args = ap.parse_args()
    c = args.c
    finest = {}
    for d in range(1, args.max_d + 1):
        for h in MESHES[d]:
            start = time.perf_counter()
            if d == 1:
                sol = solve_wd(None, c, grid=default_chart_grid(1, c, h=h))
            else:
                lower = finest.get(d - 1) if d >= 4 else None
                sol = solve_wd(build_chart(d), c, grid=default_chart_grid(d, c, h=h), lower=lower)
            est = estimate_rd(sol)
            row = est.to_json()
            row["seconds"] = round(time.perf_counter() - start, 2)
            print(json.dumps(row), flush=True)
            finest[d] = sol


if __name__ == "__main__":
    main()
