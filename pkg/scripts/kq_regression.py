"""Per-path K_est against Q_lambda with a calibrated constant, written as plot-ready CSV."""

import argparse
import json
from pathlib import Path

from youngreg.stats import k_vs_q_regression


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--H", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    p.add_argument("--alpha", type=float, default=-0.5)
    p.add_argument("--n-train", type=int, default=20)
    p.add_argument("--n-test", type=int, default=30)
    p.add_argument("--lam", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", type=Path, default=Path("results/kq"))
    args = p.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for H in args.H:
        rep = k_vs_q_regression(H, args.alpha, n_train=args.n_train, n_test=args.n_test, lam=args.lam, seed=args.seed, workers=args.workers)
        with open(args.out_dir / f"kq_H{H}.csv", "w") as fh:
            rep.to_csv(fh)
        summary = {k: v for k, v in json.loads(rep.to_json()).items() if k != "rows"}
        (args.out_dir / f"kq_H{H}.json").write_text(json.dumps(summary, indent=1))
        print(f"H={H}: C={rep.C}, violations={rep.violation_fraction}, C change {rep.C_relative_change:.2e}")


if __name__ == "__main__":
    main()
