"""
Monte Carlo estimates of the mean square
========================================

Simulates dw = -w(t - tau) dt + sigma w(t - tau) dB with Euler-Maruyama and fits
the decay rate of y(t) = E[w(t)^2] / 2.
"""

from delaygbm import exponential_sigma_max
from delaygbm.montecarlo import (
    SimConfig,
    check_monotone,
    ensemble_mean_square,
    fit_decay,
)

n_paths = 20_000

# without delay the mean square decays at exactly sigma^2 - 2
for sigma in (0.5, 1.0):
    cfg = SimConfig(tau=0.0, sigma=sigma, dt=1e-3, T=1.0, n_paths=n_paths, record_every=10)
    fit = fit_decay(ensemble_mean_square(cfg))
    print(f"sigma={sigma}: fitted rate {fit.rate:+.4f} +- {fit.stderr:.4f}, exact {sigma**2 - 2:+.4f}")

# inside the exponential region the decay is monotone
tau = 0.1
sigma = 0.5 * exponential_sigma_max(tau)[0]
cfg = SimConfig(tau, sigma, tau / 50, 4.0, n_paths, record_every=10)
series = ensemble_mean_square(cfg)
print(f"\ntau={tau}, sigma={sigma:.4f}: monotone={check_monotone(series)}, rate={fit_decay(series).rate:.3f}")
for t, y, se in list(zip(series.times, series.y, series.stderr))[::40]:
    print(f"  t={t:5.2f}  y={y:.5f} +- {se:.5f}")

# a longer delay with no noise oscillates, so monotonicity fails
cfg = SimConfig(0.5, 0.0, 0.5 / 100, 10.0, 1)
print("\ntau=0.5, sigma=0: monotone =", check_monotone(ensemble_mean_square(cfg)))

# the same seed gives the same numbers
a = ensemble_mean_square(SimConfig(0.2, 0.6, 0.01, 1.0, 500, seed=7)).y
b = ensemble_mean_square(SimConfig(0.2, 0.6, 0.01, 1.0, 500, seed=7)).y
print("reproducible:", bool((a == b).all()))
