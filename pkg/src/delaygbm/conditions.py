"""Mean-square decay conditions for delay geometric Brownian motion.

Everything here works in the reduced parameters: with the equation
``dw = -lam w(t-tau) dt + sig w(t-tau) dB`` rescaled in time, only
``tau = lam * tau`` and ``sigma = sig / sqrt(lam)`` matter.

Two sufficient conditions are provided:

* asymptotic decay, explicit: ``tau < 1`` and ``sigma < sqrt(2 - tau) - sqrt(tau)``,
  compared against the older, more restrictive bound in :func:`ehs_tau_max`;
* monotone exponential decay, resolved by a max-min search over an auxiliary
  rate ``mu > 1`` (see :func:`exponential_sigma_max`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)
INV_E = math.exp(-1.0)

#: Upper cap on mu when the window is unbounded (tau = 0) or absurdly wide.
MU_CAP = 1e6
#: Coarse grid size for the max-min search.
N_COARSE = 2048
#: Golden-section tolerance on mu.
MU_TOL = 1e-10
#: Bisection tolerance for the mu-window roots and the EHS inversion.
BISECT_TOL = 1e-10
#: Absolute slack subtracted from sigma_max before classifying a point inside.
SOLVER_SLACK = 1e-9

CurveKind = Literal["asymptotic", "ehs", "exponential"]


@dataclass(frozen=True)
class RawParams:
    lam: float
    tau: float
    sigma: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"drift rate must be positive, got {self.lam}")
        if self.tau < 0:
            raise ValueError(f"delay must be non-negative, got {self.tau}")


@dataclass(frozen=True)
class ReducedParams:
    tau: float
    sigma: float

    def __post_init__(self):
        if self.tau < 0 or self.sigma < 0:
            raise ValueError(f"reduced parameters must be non-negative, got {self}")


@dataclass(frozen=True)
class MuWindow:
    """Open interval of mu > 1 on which ``mu > exp(mu * tau)``."""

    lo: float
    hi: float

    def __contains__(self, mu: float) -> bool:
        return self.lo < mu < self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ExponentialWitness:
    mu: float
    bound: float


@dataclass(frozen=True)
class RegionCurve:
    kind: str
    points: tuple[tuple[float, float], ...]

    @property
    def taus(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=float)

    def __len__(self) -> int:
        return len(self.points)


def reduce(raw: RawParams) -> ReducedParams:
    return ReducedParams(raw.lam * raw.tau, raw.sigma / math.sqrt(raw.lam))


# ---------------------------------------------------------------------------
# asymptotic decay


def asymptotic_ok(p: ReducedParams) -> bool:
    """Sufficient condition for ``E[w(t)^2] -> 0``.

    Uses the form ``sigma^2 < 2, tau < 1 - sqrt(sigma^2 - sigma^4/4)``;
    :func:`asymptotic_ok_alt` is the equivalent ``sigma``-bound form.
    """
    s2 = p.sigma * p.sigma
    if not s2 < 2.0:
        return False
    return p.tau < 1.0 - math.sqrt(max(s2 - 0.25 * s2 * s2, 0.0))


def asymptotic_ok_alt(p: ReducedParams) -> bool:
    return p.tau < 1.0 and p.sigma < math.sqrt(2.0 - p.tau) - math.sqrt(p.tau)


def asymptotic_sigma_max(tau: float) -> float:
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if tau >= 1.0:
        return 0.0
    return math.sqrt(2.0 - tau) - math.sqrt(tau)


def asymptotic_tau_max(sigma: float) -> float:
    """Largest admissible delay for asymptotic decay at noise ``sigma`` (0 if none)."""
    s2 = sigma * sigma
    if s2 >= 2.0:
        return 0.0
    return 1.0 - 0.5 * sigma * math.sqrt(4.0 - s2)


def ehs_tau_max(sigma: float) -> float:
    """Delay bound of the older, more restrictive comparison condition."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    s2 = sigma * sigma
    if s2 >= 2.0:
        return 0.0
    return 0.25 * (-2.0 * s2 + math.sqrt(4.0 * s2 * s2 + 2.0 * (2.0 - s2) ** 2))


def ehs_ok(p: ReducedParams) -> bool:
    return p.sigma * p.sigma < 2.0 and p.tau < ehs_tau_max(p.sigma)


def ehs_sigma_max(tau: float, tol: float = BISECT_TOL) -> float:
    """Invert :func:`ehs_tau_max` at ``tau`` by bisection on sigma."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if tau >= ehs_tau_max(0.0):
        return 0.0
    if tau == 0.0:
        return SQRT2
    lo, hi = 0.0, SQRT2
    # ehs_tau_max is decreasing in sigma
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ehs_tau_max(mid) > tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kappa(p: ReducedParams) -> float:
    """Decay constant of the Lyapunov functional; positive iff asymptotic_ok."""
    return 2.0 - p.tau - (p.sigma + math.sqrt(p.tau)) ** 2


# ---------------------------------------------------------------------------
# exponential decay


def g_factor(s):
    """``sqrt((exp(2s) - 1) / (2s))``, equal to 1 at ``s = 0``.

    Accepts scalars or arrays; uses ``expm1`` so small ``s`` keeps full
    relative precision.
    """
    if isinstance(s, (int, float)):
        if s < 0:
            raise ValueError("g_factor is defined for s >= 0")
        if s == 0:
            return 1.0
        try:
            return math.sqrt(math.expm1(2.0 * s) / (2.0 * s))
        except OverflowError:
            return math.inf
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("g_factor is defined for s >= 0")
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(s > 0, np.expm1(2.0 * s) / (2.0 * np.where(s > 0, s, 1.0)), 1.0)
    out = np.sqrt(ratio)
    return float(out) if out.ndim == 0 else out


def f1(tau, mu):
    """First sigma-bound, ``exp(-mu tau) sqrt(2 mu - 2 exp(mu tau))``; 0 where the radicand is not positive."""
    tau = np.asarray(tau, dtype=float)
    mu = np.asarray(mu, dtype=float)
    e = np.exp(mu * tau)
    rad = 2.0 * mu - 2.0 * e
    out = np.where(rad > 0, np.exp(-mu * tau) * np.sqrt(np.maximum(rad, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def f2(tau, mu):
    """Second sigma-bound, ``-G sqrt(tau) + sqrt(G^2 tau - 2 G tau + 2)`` with ``G = G(mu tau)``."""
    tau = np.asarray(tau, dtype=float)
    mu = np.asarray(mu, dtype=float)
    g = g_factor(mu * tau)
    out = -g * np.sqrt(tau) + np.sqrt(g * g * tau - 2.0 * g * tau + 2.0)
    return float(out) if np.ndim(out) == 0 else out


def mu1_ok(tau: float, mu: float, sigma: float) -> bool:
    """``2 exp(mu tau) + sigma^2 exp(2 mu tau) < 2 mu`` (strict)."""
    e = math.exp(mu * tau)
    return 2.0 * e + sigma * sigma * e * e < 2.0 * mu


def mu2_ok(tau: float, mu: float, sigma: float) -> bool:
    """``(sqrt(tau) + sigma) sqrt(tau) G(mu tau) + sigma^2 / 2 < 1`` (strict)."""
    st = math.sqrt(tau)
    return (st + sigma) * st * g_factor(mu * tau) + 0.5 * sigma * sigma < 1.0


def _bisect(h: Callable[[float], float], a: float, b: float, tol: float) -> float:
    ha = h(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        hm = h(m)
        if (hm > 0) == (ha > 0):
            a, ha = m, hm
        else:
            b = m
    return 0.5 * (a + b)


def mu_window(tau: float, tol: float = BISECT_TOL) -> Optional[MuWindow]:
    """Roots of ``mu = exp(mu tau)`` bracketing the admissible mu, or None if empty.

    For ``tau = 0`` every ``mu > 1`` qualifies and ``hi`` is capped at
    :data:`MU_CAP`; the same cap applies when the true upper root is larger.
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if tau == 0.0:
        return MuWindow(1.0, MU_CAP)
    if tau >= INV_E:
        return None

    # log form of mu - exp(mu tau): same roots, no overflow
    def h(mu: float) -> float:
        return math.log(mu) - mu * tau

    # h is concave with its maximum at 1/tau
    peak = 1.0 / tau
    if not h(peak) > 0:
        return None
    lo = _bisect(h, 1.0, peak, tol)
    if h(MU_CAP) > 0:
        return MuWindow(lo, MU_CAP)
    b = 2.0 * peak
    while h(b) > 0:
        b *= 2.0
    hi = _bisect(h, peak, min(b, MU_CAP), tol)
    return MuWindow(lo, hi)


def _maxmin_objective(tau: float):
    def phi(mu):
        return np.minimum(f1(tau, mu), f2(tau, mu))

    return phi


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = MU_TOL,
                       max_iter: int = 200) -> tuple[float, float]:
    """Maximise a unimodal scalar function on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    fx = f(x)
    # the bracket interior points may beat the midpoint at a kink
    best = max((fx, x), (fc, c), (fd, d))
    return float(best[1]), float(best[0])


def exponential_sigma_max(tau: float) -> tuple[float, Optional[ExponentialWitness]]:
    """Largest sigma for which both exponential-decay bounds hold for some mu.

    Solves ``max_mu min(f1(tau, mu), f2(tau, mu))`` over the mu-window: a
    log-spaced coarse grid of :data:`N_COARSE` points locates the best bracket,
    then golden-section search refines it. Returns ``(0, None)`` when the
    window is empty (``tau >= 1/e``).
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if tau == 0.0:
        # min(sqrt(2 mu - 2), sqrt 2) = sqrt 2 for every mu >= 2
        return SQRT2, ExponentialWitness(2.0, SQRT2)
    window = mu_window(tau)
    if window is None:
        return 0.0, None
    phi = _maxmin_objective(tau)
    grid = np.geomspace(window.lo, window.hi, N_COARSE)
    vals = phi(grid)
    i = int(np.argmax(vals))
    if vals[i] <= 0.0:
        return 0.0, None
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, N_COARSE - 1)]
    mu, best = golden_section_max(lambda x: float(phi(x)), a, b)
    if best < vals[i]:
        mu, best = float(grid[i]), float(vals[i])
    return best, ExponentialWitness(mu, best)


def exponential_ok(p: ReducedParams, slack: float = SOLVER_SLACK
                   ) -> tuple[bool, Optional[ExponentialWitness]]:
    """Exponential-decay verdict plus a witness mu when the verdict is positive."""
    if p.tau >= INV_E:
        return False, None
    smax, witness = exponential_sigma_max(p.tau)
    if witness is None or not p.sigma < smax - slack:
        return False, None
    ok = mu1_ok(p.tau, witness.mu, p.sigma) and mu2_ok(p.tau, witness.mu, p.sigma)
    return ok, (witness if ok else None)


# ---------------------------------------------------------------------------
# region curves


def region_curve(kind: CurveKind, tau_grid: Sequence[float]) -> RegionCurve:
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0:
        return RegionCurve(kind, ())
    if np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must be strictly increasing")
    if taus[0] < 0:
        raise ValueError("tau grid must be non-negative")
    if kind == "asymptotic":
        sig = [asymptotic_sigma_max(t) for t in taus]
    elif kind == "ehs":
        sig = [ehs_sigma_max(t) for t in taus]
    elif kind == "exponential":
        sig = [exponential_sigma_max(t)[0] for t in taus]
    else:
        raise ValueError(f"unknown curve kind {kind!r}")
    return RegionCurve(kind, tuple((float(t), float(s)) for t, s in zip(taus, sig)))
