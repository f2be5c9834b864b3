"""Learner accuracy against OLS over a grid of learning rates and lengths.

    python3 scripts/learning_rate_sweep.py --rates 1e-3 3e-3 1e-2 --samples 5000 20000
"""
import argparse
import time

import numpy as np

from causaltwin.baselines import ols_svar_fit
from causaltwin.graph import CausalGraph, CouplingSet, ParamLayout, flatten
from causaltwin.imrnns import DivergenceError, NetworkConfig, train_online
from causaltwin.svar import NoiseSpec, generate_series

TRUTH = {
    (1, 0, 0): 0.6, (2, 0, 0): -0.4, (3, 0, 0): 0.3, (2, 0, 1): 0.5,
    (3, 0, 1): 0.4, (2, 1, 0): 0.5, (3, 1, 1): -0.3, (0, 1, 1): 0.3,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rates", type=float, nargs="+", default=[1e-3, 3e-3, 1e-2])
    ap.add_argument("--samples", type=int, nargs="+", default=[5000, 20000])
    ap.add_argument("--normalize", action="store_true")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    graph = CausalGraph(4, 1, {(c, e) for c, e, m in TRUTH if m == 0},
                        ({(c, e) for c, e, m in TRUTH if m == 1},))
    truth = CouplingSet.from_edges(graph, TRUTH)
    layout = ParamLayout.from_graph(graph)
    ref = flatten(truth, layout)

    print(f"{'samples':>8} {'rate':>8} {'ols MAE':>9} {'net MAE':>9} {'sec':>6}")
    for n in args.samples:
        for rate in args.rates:
            ols_err, net_err, t0 = [], [], time.perf_counter()
            for seed in range(args.seeds):
                s = generate_series(graph, truth, NoiseSpec("laplace", (0.2, 0.18, 1, 1), seed=seed), n)
                ols_err.append(np.abs(flatten(ols_svar_fit(s, graph).couplings, layout) - ref).mean())
                try:
                    res = train_online(s, graph, NetworkConfig(learning_rate=rate, normalize=args.normalize))
                    net_err.append(np.abs(flatten(res.couplings, layout) - ref).mean())
                except DivergenceError:
                    net_err.append(np.inf)
            dt = (time.perf_counter() - t0) / args.seeds
            print(f"{n:>8} {rate:>8.0e} {np.mean(ols_err):>9.4f} {np.mean(net_err):>9.4f} {dt:>6.1f}")


if __name__ == "__main__":
    main()
