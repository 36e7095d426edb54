"""
Mean-square stability regions in the (tau, sigma) plane
=======================================================

Tabulates the noise bound of each sufficient condition against the delay,
then checks a few parameter points.
"""

import math

import numpy as np

from delaygbm.conditions import (
    RawParams,
    asymptotic_ok,
    ehs_ok,
    exponential_ok,
    reduce,
    region_curve,
)
from delaygbm.fundamental import appleby_ok

# scaled delay on [0, 0.7]; the exponential curve ends at 1/e
taus = np.linspace(0.0, 0.7, 15)
curves = {k: region_curve(k, taus) for k in ("asymptotic", "ehs", "exponential")}

print(f"{'tau':>6} {'asymptotic':>11} {'ehs':>8} {'exponential':>12}")
for i, t in enumerate(taus):
    row = [curves[k].sigmas[i] for k in ("asymptotic", "ehs", "exponential")]
    print(f"{t:6.3f} {row[0]:11.6f} {row[1]:8.5f} {row[2]:12.6f}")

# raw model parameters are reduced first: tau -> lam*tau, sigma -> sigma/sqrt(lam)
raw = RawParams(lam=2.0, tau=0.05, sigma=0.9)
p = reduce(raw)
print("\nreduced:", p)

ok, witness = exponential_ok(p)
print("asymptotic:", asymptotic_ok(p), " older bound:", ehs_ok(p))
print("exponential:", ok, " witness mu =", witness.mu if witness else None)
print("exact criterion:", appleby_ok(p))

# with no delay every condition collapses to sigma^2 < 2
print("\nsqrt(2) =", math.sqrt(2), " curves at tau=0:", [float(c.sigmas[0]) for c in curves.values()])
