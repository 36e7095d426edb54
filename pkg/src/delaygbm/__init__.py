"""Mean-square stability analysis for delay geometric Brownian motion.

Analytic decay regions live in :mod:`delaygbm.conditions`, the fundamental
solution and exact stability test in :mod:`delaygbm.fundamental`, and the
Monte Carlo checks in :mod:`delaygbm.montecarlo`.
"""
__version__ = "0.1.0"

from .conditions import (
    ExponentialWitness,
    MuWindow,
    RawParams,
    ReducedParams,
    RegionCurve,
    asymptotic_ok,
    asymptotic_sigma_max,
    ehs_tau_max,
    exponential_ok,
    exponential_sigma_max,
    f1,
    f2,
    g_factor,
    kappa,
    mu_window,
    reduce,
    region_curve,
)
from .fundamental import (
    PiecewisePoly,
    Regime,
    appleby_ok,
    classify_regime,
    dde_solve,
    evaluate,
    fundamental_solution,
    l2_norm_sq,
    sign_changes,
)
from .montecarlo import (
    DecayFit,
    LyapCoeffs,
    MeanSquareSeries,
    SimConfig,
    check_lyapunov_descent,
    check_monotone,
    ensemble_mean_square,
    estimate_lyapunov,
    fit_decay,
    forward_backward_check,
    lyapunov_coeffs,
    simulate_path,
)
