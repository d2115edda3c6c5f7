"""Compare weak, CD and standard qubit tomography over random pure states.

Writes every trial to a CSV and prints pooled median trace distances per N.

    python3 scripts/compare_tomography.py --states 50 --trials 50 --out comparison.csv
"""

import argparse
from pathlib import Path

import numpy as np

from cdweak.cli import write_atomic
from cdweak.qcore import projector, random_ket
from cdweak.tomo import CDExact, ExperimentPlan, StandardProjective, WeakApprox, run_experiment


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--states", type=int, default=20)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--max-exp", type=int, default=6, help="largest N is 10**max_exp")
    ap.add_argument("--weak-g", type=float, default=0.1)
    ap.add_argument("--cd-g", type=float, default=np.pi / 2)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("comparison.csv"))
    return ap.parse_args()


def main():
    args = parse_args()
    sizes = tuple(10**k for k in range(2, args.max_exp + 1))
    methods = (WeakApprox(args.weak_g), CDExact(args.cd_g), StandardProjective())
    rng = np.random.default_rng(args.seed)
    lines = ["state,method,g,N,trial,seed,trace_distance"]
    pooled = {}
    for i in range(args.states):
        plan = ExperimentPlan(projector(random_ket(2, rng)), methods, sizes, args.trials,
                              base_seed=args.seed + i)
        for r in run_experiment(plan, threads=args.threads).rows:
            g = "" if r.g is None else repr(r.g)
            lines.append(f"{i},{r.method},{g},{r.N},{r.trial},{r.seed},{r.trace_distance!r}")
            pooled.setdefault((r.method, r.N), []).append(r.trace_distance)
    write_atomic(args.out, "\n".join(lines) + "\n")

    names = [m.name for m in methods]
    print("N".rjust(9) + "".join(n.rjust(12) for n in names))
    for n in sizes:
        print(f"{n:>9}" + "".join(f"{np.median(pooled[m, n]):12.4g}" for m in names))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
