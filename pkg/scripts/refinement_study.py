"""Oracle error and interface jump diagnostics of one analytic case under mesh refinement.

Example:
    python3 scripts/refinement_study.py magnetized_cylinder --h 2e-2 1e-2 5e-3
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field

import numpy as np

from ferrovolt import cli, postproc
from ferrovolt.oracles import KINDS, MAGNETIZED_CYLINDER


@dataclass
class StudyConfig:
    kind: str = MAGNETIZED_CYLINDER
    h_levels: list[float] = field(default_factory=lambda: [2e-2, 1e-2, 5e-3])
    overrides: list[str] = field(default_factory=list)


def run(cfg: StudyConfig) -> list[dict]:
    rows = []
    for h in cfg.h_levels:
        sol, oracle = cli.run_oracle(cfg.kind, h, cfg.overrides)
        errs = cli.verify_errors(cfg.kind, sol, oracle, h)
        face = postproc.interface_jump_report(sol).interfaces[0]
        cent = postproc.interface_jump_report(sol, values="centroid").interfaces[0]
        row = dict(h=h, cells=sum(st.region.n_cells for st in sol.states.values()), iterations=sol.iterations,
                   rel_l2=errs["rel_l2"], rel_max=errs["rel_max"],
                   face_residual=face.residual_l2 / max(face.mu0K_l2, 1e-300),
                   centroid_residual=cent.residual_l2 / max(cent.mu0K_l2, 1e-300))
        print(f"h {h:<8g} cells {row['cells']:>6d}  it {row['iterations']:>5d}  rel L2 {row['rel_l2']:.3e}  "
              f"rel max {row['rel_max']:.3e}  jump resid face {row['face_residual']:.2e} "
              f"centroid {row['centroid_residual']:.3f}", flush=True)
        rows.append(row)
    if len(rows) > 1:
        h = np.array([r["h"] for r in rows])
        for key in ("rel_l2", "centroid_residual"):
            e = np.array([r[key] for r in rows])
            slope = np.polyfit(np.log(h), np.log(e), 1)[0]
            print(f"observed order of {key}: {slope:.2f}")
    return rows


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("kind", nargs="?", choices=KINDS, default=MAGNETIZED_CYLINDER)
    p.add_argument("--h", type=float, nargs="+", default=[2e-2, 1e-2, 5e-3], help="near-body edge lengths")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    args = p.parse_args()
    run(StudyConfig(args.kind, args.h, args.set))


if __name__ == "__main__":
    main()
