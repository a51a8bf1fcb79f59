"""Outer-iteration count and status of one case over a range of relaxation factors.

Example:
    python3 scripts/relaxation_sweep.py --case case4_tri --lambdas 0.5 0.8 1.0
"""
from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field
from pathlib import Path

from ferrovolt import cases, cli

CASES = {
    "case1": cases.case1,
    "case2": cases.case2,
    "case3": cases.case3,
    "case4_quad": lambda **kw: cases.case4("quad", **kw),
    "case4_tri": lambda **kw: cases.case4("tri", **kw),
}


@dataclass
class SweepConfig:
    case: str = "case4_tri"
    lambdas: list[float] = field(default_factory=lambda: [0.5, 0.8, 1.0])
    h_near: float = cases.H_NEAR
    overrides: list[str] = field(default_factory=list)
    out: Path | None = None


def sweep(cfg: SweepConfig) -> list[dict]:
    rows = []
    for lam in cfg.lambdas:
        spec = CASES[cfg.case](h_near=cfg.h_near)
        sol = cli.solve_spec(spec, [*cfg.overrides, f"solver.lambda_div={lam}"])
        row = {"lambda_div": lam, "status": sol.status, "iterations": sol.iterations,
               "final_residual": sol.history[-1] if sol.history else 0.0, "wall_time_s": round(sol.wall_time, 2)}
        print(f"lambda {lam:<5g} {row['status']:<14} {row['iterations']:>6d} it  "
              f"residual {row['final_residual']:.2e}  {row['wall_time_s']:.1f} s", flush=True)
        rows.append(row)
    return rows


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--case", choices=sorted(CASES), default=SweepConfig.case)
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.5, 0.8, 1.0])
    p.add_argument("--h-near", type=float, default=cases.H_NEAR)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--out", type=Path, help="optional CSV of the sweep")
    args = p.parse_args()
    cfg = SweepConfig(args.case, args.lambdas, args.h_near, args.set, args.out)
    rows = sweep(cfg)
    if cfg.out:
        with cfg.out.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
