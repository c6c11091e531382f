#!/usr/bin/env python3
"""Solve a feasibility SDP in SDPA sparse format with cvxpy and print yMat.

The problem is read as: find Y = diag(Y_1, ..., Y_b), Y_l PSD (or
nonnegative for diagonal blocks), with F_k . Y = c_k for every k.  The output
mimics the yMat section of SDPA so `monocert import-sos` can read it.
"""

import argparse
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    with open(path) as f:
        lines = [l for l in f if l.strip() and l[0] not in '"*']
    m = int(lines[0].split()[0])
    sizes = [int(v) for v in lines[2].replace(",", " ").replace("{", " ").replace("}", " ").split()]
    c = [float(v) for v in lines[3].replace(",", " ").replace("{", " ").replace("}", " ").split()]
    entries = []
    for l in lines[4:]:
        k, b, i, j, v = l.split()
        entries.append((int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(v)))
    return m, sizes, c, entries


def solve(path, solver):
    m, sizes, c, entries = read_sdpa(path)
    ys = [cp.Variable((s, s), PSD=True) if s > 0 else cp.Variable(-s, nonneg=True) for s in sizes]
    lhs = [0] * m
    for k, b, i, j, v in entries:
        if k == 0:
            continue
        if sizes[b] < 0:
            term = ys[b][i]
        else:
            # Off-diagonal entries appear twice in the trace inner product.
            term = ys[b][i, j] * (1 if i == j else 2)
        lhs[k - 1] = lhs[k - 1] + v * term
    problem = cp.Problem(cp.Minimize(0), [lhs[k] == c[k] for k in range(m)])
    if solver == "SCS":
        problem.solve(solver=cp.SCS, eps=1e-9)
    else:
        problem.solve(solver=solver)
    return problem.status, sizes, ys


def format_ymat(sizes, ys):
    out = ["yMat = ", "{"]
    for s, y in zip(sizes, ys):
        a = np.atleast_1d(y.value)
        if s < 0:
            out.append("{" + ",".join(repr(float(x)) for x in a) + "}")
        else:
            rows = ("{" + ",".join(repr(float(x)) for x in row) + "}" for row in np.atleast_2d(a))
            out.append("{" + ",".join(rows) + "}")
    out.append("}")
    return "\n".join(out) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("problem", help="SDPA sparse file written by monocert export-sos")
    parser.add_argument("-o", "--output", help="write yMat here instead of stdout")
    parser.add_argument("--solver", default="SCS")
    args = parser.parse_args()
    status, sizes, ys = solve(args.problem, args.solver)
    print("status:", status, file=sys.stderr)
    if status not in ("optimal", "optimal_inaccurate"):
        return 1
    text = format_ymat(sizes, ys)
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
