"""Write the example case directories (mesh.msh + config.ini) under cases/."""
from __future__ import annotations

import argparse
from pathlib import Path

from ferrovolt import cases
from ferrovolt.oracles import KINDS


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=Path("cases"))
    p.add_argument("--h-near", type=float, default=cases.H_NEAR)
    args = p.parse_args()
    specs = [cases.case1(h_near=args.h_near), cases.case2(h_near=args.h_near), cases.case3(h_near=args.h_near),
             cases.case4("quad", h_near=args.h_near, solver={"lambda_div": "1.0"}),
             cases.case4("tri", h_near=args.h_near, solver={"lambda_div": "1.0"}),
             cases.null_case()]
    specs += [cases.oracle_spec(k, args.h_near)[0] for k in KINDS]
    for spec in specs:
        d = cases.write_case(spec, args.out / spec.name)
        print(d)


if __name__ == "__main__":
    main()
