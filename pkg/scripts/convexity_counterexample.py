"""Sampled convexity of g(x, y) = |x|^beta |y|^alpha on R^2, plus a witness.

For beta = 0 the map is convex. For beta > 0 it is not: along the segment
from (2, 0) to (0, 2) the endpoints give 0 while the midpoint (1, 1)
gives 1.

usage: python scripts/convexity_counterexample.py [n_samples]
"""

import sys

from ergomix.checker import convexity_probe


def g(x, y, a, b):
    return abs(x) ** b * abs(y) ** a


def main(n=100000):
    print(f"{'alpha':>5} {'beta':>5} {'violations':>11} {'worst':>10} {'min det H':>11}")
    for a in (2, 3, 4):
        for b in (0, 1, 2):
            r = convexity_probe(a, b, n, seed=9)
            print(f"{a:5d} {b:5d} {r.n_violations:11d} {r.worst_violation:10.3g} "
                  f"{r.hessian_min_det:11.3g}")
    for a, b in ((2, 1), (3, 2)):
        mid = g(1, 1, a, b)
        avg = 0.5 * g(2, 0, a, b) + 0.5 * g(0, 2, a, b)
        print(f"alpha={a} beta={b}: g(1,1) = {mid} > {avg} = average of g(2,0), g(0,2)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100000)
