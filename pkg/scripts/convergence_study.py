"""Endpoint error of fixed-step RK4 along conformal geodesics as the step shrinks.

Prints one row per step with the max endpoint error against a fine reference,
the error ratio to the previous row and the observed order.  Below h ~ 1e-2
the error hits roundoff and the ratio stops meaning anything.
"""

import argparse

import numpy as np

from finslercheck import FinslerMetric, SampleConfig, geodesic_spray, sample_points
from finslercheck.first_integrals import integrate_geodesic


def endpoint(S, p, h, t_end):
    tr = integrate_geodesic(S, p, t_end, h, error_estimate=False)
    return np.concatenate([tr.x[-1], tr.y[-1]]), tr


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phi", default="0.5*x1 + 0.2*x2^2", help="conformal factor phi(x)")
    ap.add_argument("--t-end", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=101)
    ap.add_argument("--levels", type=int, default=6, help="number of halvings starting at h=0.2")
    args = ap.parse_args()

    F = FinslerMetric.conformal(args.phi, 2)
    S = geodesic_spray(F)
    p = sample_points(SampleConfig(seed=args.seed, count=1)).points[0]
    steps = [0.2 / 2 ** k for k in range(args.levels)]
    ref, _ = endpoint(S, p, steps[-1] / 16, args.t_end)

    print(f"start x={p.x} y={p.y}")
    print(f"{'h':>10} {'error':>12} {'ratio':>8} {'order':>6} {'energy drift':>13}")
    prev = None
    for h in steps:
        z, tr = endpoint(S, p, h, args.t_end)
        err = float(np.max(np.abs(z - ref)))
        E = F.F2.values(tr.x, tr.y)
        drift = float(np.max(np.abs(E - E[0])) / E[0])
        if prev is None or err == 0:
            print(f"{h:10.5f} {err:12.3e} {'':>8} {'':>6} {drift:13.3e}")
        else:
            print(f"{h:10.5f} {err:12.3e} {prev / err:8.2f} {np.log2(prev / err):6.2f} {drift:13.3e}")
        prev = err


if __name__ == "__main__":
    main()
