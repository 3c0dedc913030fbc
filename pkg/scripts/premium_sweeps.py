"""Lifetime value and purchase threshold across contract grids for the fitted daily model.

Produces three CSV files: exercise level by total premium, the premium
split at fixed total, and value against exercise level at fixed total.
Rates of the fitted model are per day and the discount rate is 3% per year.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from eimstore.diffusion import OU, make_eigenpair
from eimstore.lifetime import lifetime_construct
from eimstore.payoff import ContractParams

RATE = 0.03 / 365.25


def solve(pair, x_star, p_c, K_c):
    if p_c + K_c >= x_star:
        return None
    return lifetime_construct(pair, ContractParams(x_star, p_c, K_c, RATE))


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pair = make_eigenpair(OU(68.69, 30.99, 483.33), RATE)

    rows = []
    for x_star in (50.0, 75.0, 100.0):
        for total in np.arange(20.0, 50.0 + 1e-9, 2.5):
            sol = solve(pair, x_star, total / 2, total / 2)
            rows.append([x_star, total, "" if sol is None else sol.y_star,
                         "" if sol is None else sol.price_check, "excluded" if sol is None else "ok"])
    write(out / "premium_grid.csv", ["x_star", "total_premium", "y_star", "price_check", "status"], rows)
    checks = [r[3] for r in rows if r[4] == "ok"]

    rows = []
    for x_star in (75.0, 100.0):
        for p_c in (0.0, 10.0, 25.0, 40.0, 50.0 - 1e-9):
            sol = solve(pair, x_star, p_c, 50.0 - p_c)
            rows.append([x_star, p_c, 50.0 - p_c, sol.y_star, sol.price_check])
    write(out / "premium_split.csv", ["x_star", "p_c", "K_c", "y_star", "price_check"], rows)

    xs = np.arange(60.0, 140.0 + 1e-9, 5.0)
    sols = [solve(pair, x, 10.0, 10.0) for x in xs]
    write(out / "exercise_level.csv", ["x_star", "y_star", "price_check"],
          [[x, s.y_star, s.price_check] for x, s in zip(xs, sols)])
    ys = np.array([s.y_star for s in sols])
    print(f"threshold range over the premium grid: {min(checks):.2f} .. {max(checks):.2f}")
    print(f"mean slope of y_star, x* 60-110: {(ys[0] - ys[10]) / 50:.1f}, 110-140: {(ys[10] - ys[-1]) / 30:.1f}")
    print(f"CSV files written to {out}/")


if __name__ == "__main__":
    main()
