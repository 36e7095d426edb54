"""
Lyapunov descent and the forward-backward bound
===============================================

Estimates the Lyapunov functional along simulated paths and compares the
mean square at earlier and later times against exponential envelopes.
"""

import numpy as np

from delaygbm import ReducedParams, exponential_ok, kappa
from delaygbm.montecarlo import (
    SimConfig,
    check_lyapunov_descent,
    ensemble_mean_square,
    estimate_lyapunov,
    forward_backward_check,
    lyapunov_coeffs,
)

p = ReducedParams(0.25, 0.5)
coeffs = lyapunov_coeffs(p)
k = kappa(p)
print("coefficients:", coeffs, " kappa:", k)

# dE[L]/dt + kappa E[w(t - tau)^2] should stay below zero
cfg = SimConfig(p.tau, p.sigma, p.tau / 25, 3.0, 10_000, record_every=5)
series = estimate_lyapunov(cfg, coeffs, kappa=k)
print("descent holds:", check_lyapunov_descent(series))
print("largest excess in stderr units:", float(np.max(series.excess / series.excess_stderr)))

# with a witness mu, y(t - s) stays within exp(+-2 mu s) of y(t)
p = ReducedParams(0.1, 0.5)
ok, witness = exponential_ok(p)
print("\nexponential condition:", ok, " witness mu:", witness.mu)
ms = ensemble_mean_square(SimConfig(p.tau, p.sigma, p.tau / 50, 3.0, 10_000, record_every=5))
rng = np.random.default_rng(1)
t = rng.uniform(0, 3, 50)
s = rng.uniform(0, 1, 50) * np.minimum(t + p.tau, 1.0)
print("forward-backward bound holds:", forward_backward_check(ms, witness.mu, zip(t, s)))
