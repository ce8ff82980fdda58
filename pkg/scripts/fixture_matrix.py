"""Print the built-in fixture matrix, optionally with the connection sign flipped.

With ``--mutate`` the nonlinear connection is negated, which should make the
metrizability fixtures fail; this is a quick check that the checkers bite.
"""

import argparse
import sys
from collections import Counter

from finslercheck.connection import injected_connection_sign_error
from finslercheck.selftest import selftest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mutate", action="store_true", help="flip the sign of N^i_j")
    args = ap.parse_args()

    if args.mutate:
        with injected_connection_sign_error():
            report = selftest(verbose=True, stream=sys.stdout)
    else:
        report = selftest(verbose=True, stream=sys.stdout)
    by_group = Counter(r["group"] for r in report["checks"] if not r["ok"])
    if by_group:
        print("unexpected results per group:", dict(sorted(by_group.items())))
    return 0 if report["summary"]["passed"] else 2


if __name__ == "__main__":
    sys.exit(main())
