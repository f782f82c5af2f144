"""Traffic equilibrium: LCP residual of the averaged iterate against an extragradient reference."""
import argparse

from ropex import ExperimentConfig, run_experiment
from ropex.metrics import reference_solution
from ropex.problems import traffic_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    ref = reference_solution(traffic_problem())
    print(f"reference flows {ref.x.round(4)}  phi={ref.phi:.2e}  iterations={ref.iterations}")
    cfg = ExperimentConfig(problem="traffic", policy="monotone-fixed", K=(2**8, 2**10, 2**12, 2**14),
                           reps=args.reps, seed=args.seed)
    report = run_experiment(cfg, args.out)
    print(report.text())
    for row in report.finals:
        print(f"K={row.k:6d}  phi={row.mean['lcp_phi']:.4g}  dist={row.mean['dist_inner']:.4g}")


if __name__ == "__main__":
    main()
