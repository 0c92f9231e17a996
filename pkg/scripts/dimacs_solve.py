#!/usr/bin/env python3
"""Standalone DIMACS CNF solver with the standard s/v output protocol.

Reads from a file argument or stdin, prints 's SATISFIABLE' + 'v ...' lines
or 's UNSATISFIABLE', and exits 10/20 accordingly.  Serves as the external
solver for the verifier's cross-check mode:

    ttnet verify ... --solver "python3 scripts/dimacs_solve.py"
"""

import argparse
import sys

from ttnet.satverify import parse_dimacs, solve


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("cnf", nargs="?", help="DIMACS file (default: stdin)")
    args = ap.parse_args()
    text = open(args.cnf).read() if args.cnf else sys.stdin.read()
    cnf = parse_dimacs(text)
    sat, model = solve(cnf)
    if sat:
        print("s SATISFIABLE")
        lits = [v if model[v] else -v for v in sorted(model)]
        for i in range(0, len(lits), 20):
            print("v " + " ".join(map(str, lits[i:i + 20])))
        print("v 0")
        return 10
    print("s UNSATISFIABLE")
    return 20


if __name__ == "__main__":
    sys.exit(main())
