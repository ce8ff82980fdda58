"""Build a gyroscopic spray from a metric and a constant 2-form, then recover the form.

Also runs the same recovery on a spray that is not gyroscopic for the metric,
where the recovered form depends on the fiber direction.
"""

import argparse

import numpy as np

from finslercheck import (
    FinslerMetric,
    SampleConfig,
    Spray,
    angular_invariance_residual,
    make_gyroscopic_spray,
    recover_gyroscopic_form,
    sample_points,
)


def show(label, S, F, samples, fibers):
    a = angular_invariance_residual(S, F, samples)
    g = recover_gyroscopic_form(S, F, samples, fiber_count=fibers)
    w = g.recovered["omega"][:, 0, 1]
    print(f"{label}")
    print(f"  angular invariance   {a.max_residual:.3e}  ({a.status})")
    print(f"  omega_12 mean/range  {w.mean():.12f}  [{w.min():.6f}, {w.max():.6f}]")
    print(f"  fiber spread         {g.checks['fiber_spread_max']:.3e}")
    print(f"  i_S omega residual   {g.checks['isomega_max']:.3e}")
    print(f"  verdict              {g.status}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, default=0.3, help="constant omega_12")
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--fibers", type=int, default=4)
    args = ap.parse_args()

    samples = sample_points(SampleConfig(seed=0, count=args.count))
    E = FinslerMetric.euclidean(2)
    w = f"{args.omega!r}"
    S = make_gyroscopic_spray(E, [["0", w], [f"-{w}", "0"]])
    y = np.array(samples.y)
    G = S.values(samples.x, samples.y)
    r = np.linalg.norm(y, axis=1)
    closed = np.stack([-0.5 * args.omega * r * y[:, 1], 0.5 * args.omega * r * y[:, 0]], axis=1)
    print(f"G against closed form -w/2 |y| J y: {np.abs(G - closed).max():.3e}")
    show(f"gyroscopic spray, euclidean metric, omega_12 = {args.omega}", S, E, samples, args.fibers)
    show("flat spray, conformal metric exp(0.5 x1 + 0.2 x2^2)|y|", Spray.flat(2),
         FinslerMetric.conformal("0.5*x1 + 0.2*x2^2", 2), samples, args.fibers)


if __name__ == "__main__":
    main()
