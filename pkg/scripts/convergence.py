"""Solutions with mollified drifts b_n against the unmollified solution."""

import argparse
from pathlib import Path

from youngreg.averaging import bundled_field
from youngreg.fbm import HurstParams, sample_path
from youngreg.solver import SolveConfig, convergence_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--field", default="mollify_6atom")
    p.add_argument("--H", type=float, default=0.5)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--scheme", choices=["exp", "power"], default="exp")
    p.add_argument("--n-list", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out-dir", type=Path, default=Path("results/convergence"))
    args = p.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    b = bundled_field(args.field)
    for seed in args.seeds:
        path = sample_path(HurstParams(args.H, b.d, 2**args.depth, seed))
        rep = convergence_experiment(b, path, [0.0] * b.d, args.scheme, args.n_list, SolveConfig())
        (args.out_dir / f"seed{seed}.json").write_text(rep.to_json())
        errs = ", ".join(f"{e:.3e}" for e in rep.errors)
        ratios = ", ".join(f"{r:.4f}" for r in rep.ratios)
        print(f"seed {seed}: sup errors [{errs}], ratios [{ratios}]")


if __name__ == "__main__":
    main()
