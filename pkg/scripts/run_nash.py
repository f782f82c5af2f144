"""Compare the monotone and strongly monotone policies on the two-player Nash game."""
import argparse

from ropex import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    sweep = (2**8, 2**10, 2**12, 2**14)
    for policy in ("monotone-fixed", "strongly-monotone"):
        cfg = ExperimentConfig(problem="nash-strong", policy=policy, K=sweep, reps=args.reps, seed=args.seed)
        out = None if args.out is None else f"{args.out}/{policy}"
        print(f"== {policy}")
        print(run_experiment(cfg, out).text())


if __name__ == "__main__":
    main()
