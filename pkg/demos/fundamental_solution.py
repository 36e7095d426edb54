"""
The fundamental solution of u'(t) = -u(t - tau)
===============================================

Builds the solution piece by piece as exact polynomials, measures its
squared L2 norm and counts sign changes in each stability regime.
"""

import math

import numpy as np

from delaygbm.fundamental import (
    NotSquareIntegrable,
    classify_regime,
    fundamental_solution,
    l2_norm_sq,
    sign_changes,
)

# each delay interval adds one polynomial of one higher degree
r = fundamental_solution(0.3, 4)
for k, c in enumerate(r.pieces):
    print(f"piece {k}: coefficients {np.round(c, 6)}")

# below 1/e the solution decays monotonically, up to pi/2 it oscillates, then grows
for tau in (0.2, 1 / math.e, 0.8, 1.4, 1.6):
    regime = classify_regime(tau)
    try:
        res = l2_norm_sq(tau)
        norm = f"{res.value:.10f} ({res.n_pieces} pieces)"
    except NotSquareIntegrable:
        norm = "diverges"
    n = 60
    changes = sign_changes(fundamental_solution(tau, n + 1), n * tau)
    print(f"tau={tau:.4f}  {regime.value:<19} |r|^2 = {norm:<34} sign changes on [0,{n}tau]: {changes}")

# a compact check: the norm has the closed form (1 + sin tau) / (2 cos tau)
tau = 1.0
print("\nnorm at tau=1:", l2_norm_sq(tau).value, " closed form:", (1 + math.sin(tau)) / (2 * math.cos(tau)))
