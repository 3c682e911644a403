#!/usr/bin/env python3
"""
Independent checks
==================

Closed forms and trees that the simulation, autodiff and GP code must agree
with.  ``dklpricer verify`` runs the same battery and exits 3 on a failure.
"""

import numpy as np

from dklpricer import bench, gp, grad as G, oracles

for line in (r.line() for r in bench.run_oracle_suite(seed=0, emit=None)):
    print(line)

# Bermudan sits between European and American on the same tree
eu, berm, am = (oracles.crr_bermudan(40, 40, 0.06, 0.2, 1.0, 2000, k) for k in (1, 10, 2000))
print(f"put S=K=40: European {eu:.4f} <= Bermudan(10) {berm:.4f} <= American {am:.4f}")

# the tape on a scalar function of a matrix, against central differences
A = np.random.default_rng(0).standard_normal((4, 4))


def f(x):
    X = G.reshape(x, (4, 4))
    return G.sum(G.exp(-gp.sqdist(X, X) / 4.0))


print("finite difference error", G.finite_diff_check(f, A.ravel()))
