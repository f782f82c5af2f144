"""Deterministic skew toy: empirical gap rates next to the closed-form bounds."""
import argparse

from ropex import PolicyKind, RunConfig, run, theoretical_bounds
from ropex.metrics import loglog_rate_fit
from ropex.problems import skew_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--policy", default="smooth-deterministic")
    ap.add_argument("--max-log2k", type=int, default=14)
    args = ap.parse_args()
    policy = PolicyKind.parse(args.policy)
    p = skew_toy(2, center=(0.5, 0.5), target=(0.9, 0.8))
    pts = []
    for j in range(6, args.max_log2k + 1, 2):
        K = 2**j
        m = run(p, policy, RunConfig(K=K, metric_cadence=K)).checkpoints[-1].metrics
        b = theoretical_bounds(policy, p.constants, p.D_X, K)
        pts.append((K, m["feasibility_gap"]))
        print(f"K={K:6d}  feasibility={m['feasibility_gap']:.3e} (bound {b.feasibility_upper:.3e})  "
              f"optimality={m['optimality_gap']:.3e}")
    print(f"fitted feasibility slope {loglog_rate_fit(pts)[0]:.3f}")


if __name__ == "__main__":
    main()
