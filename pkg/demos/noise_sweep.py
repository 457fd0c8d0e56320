"""Singular values of the noisy Experiment-1 matrix as l grows.

Shows how the threshold rule and the plain numerical rank disagree once
noise is present.

    python demos/noise_sweep.py [--noise 0.01] [--seeds 5]
"""
import argparse

import numpy as np

from descriptor_ddc import ExperimentConfig, SimulatedPlant, circuit_system, identify_type, run_experiment1
from descriptor_ddc.errors import AmbiguousSpectrum


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--l", type=int, nargs="+", default=[4, 10, 100, 1000])
    args = ap.parse_args(argv)

    sys_ = circuit_system()
    print(f"{'l':>5} {'s1':>8} {'s2':>8} {'s3':>8} {'s4':>8}  threshold  naive")
    for l in args.l:
        for seed in range(args.seeds):
            e1 = run_experiment1(SimulatedPlant(sys_, noise_scale=args.noise), ExperimentConfig(l=l, seed=seed))
            s = np.linalg.svd(e1.M, compute_uv=False)
            try:
                thr = identify_type(e1.M, noise_mode="threshold").rank_E_estimate
            except AmbiguousSpectrum:
                thr = "?"
            naive = identify_type(e1.M).rank_E_estimate
            print(f"{l:>5} " + " ".join(f"{v:8.4f}" for v in s) + f"  {thr!s:>9}  {naive:>5}")


if __name__ == "__main__":
    main()
