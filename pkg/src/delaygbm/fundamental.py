"""Fundamental solution of ``u'(t) = -u(t - tau)`` by the method of steps.

The fundamental solution ``r`` has history 0 on ``(-tau, 0)`` and ``r(0) = 1``.
On each interval ``[k tau, (k+1) tau)`` it is a polynomial of degree ``<= k``,
obtained from the previous piece by exact antidifferentiation. Its squared
L2 norm decides mean-square stability exactly (``int r^2 < 1/sigma^2``), so
this module serves as the reference against which the sufficient conditions
in :mod:`delaygbm.conditions` are checked.

A grid solver, :func:`dde_solve`, integrates the same equation independently
with the explicit trapezoidal rule.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .conditions import INV_E, ReducedParams

HALF_PI = 0.5 * math.pi

#: Trailing coefficients whose contribution on a piece is below this fraction
#: of the largest term are dropped; far below double rounding.
_TRIM_RTOL = 2.0 ** -64
#: Points per piece used for piece maxima and sign-change scans.
_SCAN_POINTS = 256


class NotSquareIntegrable(ValueError):
    """Raised when ``tau >= pi/2``: the fundamental solution does not decay."""


class CoefficientOverflow(OverflowError):
    def __init__(self, achieved: int):
        super().__init__(f"polynomial coefficients overflowed after {achieved} pieces")
        self.achieved = achieved


class Regime(str, enum.Enum):
    MONOTONE_STABLE = "monotone_stable"
    OSCILLATORY_STABLE = "oscillatory_stable"
    UNSTABLE = "unstable"


def _horner(coef: np.ndarray, s):
    out = np.zeros_like(np.asarray(s, dtype=float)) + coef[-1]
    for c in coef[-2::-1]:
        out = out * s + c
    return out


def _eval_compensated(coef: np.ndarray, s: float) -> float:
    """Sum of ``c_j s^j`` with Neumaier summation; used at breakpoints."""
    total = 0.0
    comp = 0.0
    power = 1.0
    for c in coef:
        term = c * power
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
        power *= s
    return total + comp


@dataclass(frozen=True)
class PiecewisePoly:
    """Piece ``k`` holds monomial coefficients in ``s = t - k tau`` on ``[k tau, (k+1) tau)``."""

    tau: float
    pieces: tuple[np.ndarray, ...]

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @property
    def horizon(self) -> float:
        return self.n_pieces * self.tau

    def piece_index(self, t):
        k = np.floor(np.asarray(t, dtype=float) / self.tau).astype(int)
        return np.minimum(k, self.n_pieces - 1)

    def __call__(self, t):
        return evaluate(self, t)

    def right_value(self, k: int) -> float:
        """Value of piece ``k`` at its right endpoint (the start of piece ``k+1``)."""
        return _eval_compensated(self.pieces[k], self.tau)

    def piece_integral_sq(self, k: int) -> float:
        """Exact ``int_0^tau p_k(s)^2 ds``."""
        c = self.pieces[k]
        sq = np.convolve(c, c)
        j = np.arange(1, sq.size + 1)
        terms = sq * self.tau ** j / j
        return math.fsum(terms)

    def piece_max_abs(self, k: int) -> float:
        s = np.linspace(0.0, self.tau, _SCAN_POINTS)
        return float(np.max(np.abs(_horner(self.pieces[k], s))))


def _next_piece(coef: np.ndarray, tau: float) -> np.ndarray:
    # p_{k+1}(s) = p_k(tau) - int_0^s p_k
    start = _eval_compensated(coef, tau)
    j = np.arange(1, coef.size + 1)
    nxt = np.empty(coef.size + 1)
    nxt[0] = start
    nxt[1:] = -coef / j
    with np.errstate(over="ignore"):
        terms = np.abs(nxt) * tau ** np.arange(nxt.size)
    big = terms.max()
    if not np.isfinite(big):
        raise OverflowError
    if big > 0:
        keep = np.nonzero(terms > _TRIM_RTOL * big)[0]
        nxt = nxt[: keep[-1] + 1] if keep.size else nxt[:1]
    return nxt


def fundamental_solution(tau: float, n_pieces: int) -> PiecewisePoly:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if n_pieces < 1:
        raise ValueError(f"need at least one piece, got {n_pieces}")
    pieces = [np.array([1.0])]
    while len(pieces) < n_pieces:
        try:
            pieces.append(_next_piece(pieces[-1], tau))
        except OverflowError:
            raise CoefficientOverflow(len(pieces)) from None
    return PiecewisePoly(float(tau), tuple(pieces))


def evaluate(poly: PiecewisePoly, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr >= poly.horizon):
        raise ValueError(f"t outside covered range [0, {poly.horizon})")
    k = np.floor(t_arr / poly.tau).astype(int)
    k = np.minimum(k, poly.n_pieces - 1)
    s = t_arr - k * poly.tau
    if t_arr.ndim == 0:
        return float(_horner(poly.pieces[int(k)], float(s)))
    out = np.empty_like(t_arr)
    for kk in np.unique(k):
        m = k == kk
        out[m] = _horner(poly.pieces[kk], s[m])
    return out


@dataclass(frozen=True)
class L2Result:
    """Certified squared norm: ``value`` includes ``tail_bound`` for the unsummed pieces."""

    value: float
    partial_sum: float
    tail_bound: float
    n_pieces: int


def l2_norm_sq(tau: float, tol: float = 1e-10, max_pieces: int = 1 << 16) -> L2Result:
    """Squared L2 norm of the fundamental solution on ``(0, inf)``.

    Pieces are integrated exactly. After each piece an exponential envelope is
    fitted to the piece maxima (amplitude: max over the last three pieces;
    per-piece ratio: from the three pieces before those) and summation stops
    once the geometric tail of the envelope squared drops below ``tol``.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if tau >= HALF_PI:
        raise NotSquareIntegrable(f"tau={tau} >= pi/2: fundamental solution is not square-integrable")
    poly_coef = np.array([1.0])
    # running state kept locally; a PiecewisePoly is only needed for its helpers
    maxima: list[float] = []
    contribs: list[float] = []
    grid = np.linspace(0.0, tau, _SCAN_POINTS)
    j_cache = np.arange(1, 2 * 64 + 2)
    for k in range(max_pieces):
        if k > 0:
            poly_coef = _next_piece(poly_coef, tau)
        sq = np.convolve(poly_coef, poly_coef)
        if sq.size > j_cache.size:
            j_cache = np.arange(1, sq.size + 1)
        j = j_cache[: sq.size]
        contribs.append(math.fsum(sq * tau ** j / j))
        maxima.append(float(np.max(np.abs(_horner(poly_coef, grid)))))
        if len(maxima) >= 6:
            amp = max(maxima[-3:])
            prev = max(maxima[-6:-3])
            if prev > 0:
                rho = (amp / prev) ** (1.0 / 3.0)
                if rho < 1.0:
                    tail = tau * amp * amp * rho * rho / (1.0 - rho * rho)
                    if tail < tol:
                        partial = math.fsum(contribs)
                        return L2Result(partial + tail, partial, tail, k + 1)
            elif amp == 0.0:
                partial = math.fsum(contribs)
                return L2Result(partial, partial, 0.0, k + 1)
    raise RuntimeError(f"tail bound did not reach tol={tol} within {max_pieces} pieces")


def appleby_ok(p: ReducedParams, tol: float = 1e-10) -> tuple[bool, str]:
    """Necessary and sufficient mean-square stability test ``int r^2 < 1/sigma^2``.

    Returns ``(verdict, reason)``; divergence (``tau >= pi/2``) is a ``False``
    verdict rather than an exception. With ``sigma = 0`` the test reduces to
    finiteness of the norm. The norm must clear the threshold by
    more than ``tol`` to count.
    """
    if p.tau == 0.0:
        norm = 0.5  # r(t) = exp(-t)
    else:
        try:
            norm = l2_norm_sq(p.tau, tol).value
        except NotSquareIntegrable as exc:
            return False, str(exc)
    if p.sigma == 0.0:
        return True, f"int r^2 = {norm:.12g} is finite"
    threshold = 1.0 / (p.sigma * p.sigma)
    if norm + tol < threshold:
        return True, f"int r^2 = {norm:.12g} < 1/sigma^2 = {threshold:.12g}"
    return False, f"int r^2 = {norm:.12g} >= 1/sigma^2 = {threshold:.12g} (margin {tol:g})"


def classify_regime(tau: float) -> Regime:
    """Qualitative behaviour of ``u' = -u(t - tau)``.

    The boundary ``tau = 1/e`` counts as monotone-stable and ``tau = pi/2`` as
    unstable.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if tau <= INV_E:
        return Regime.MONOTONE_STABLE
    if tau < HALF_PI:
        return Regime.OSCILLATORY_STABLE
    return Regime.UNSTABLE


def _refine_root(coef: np.ndarray, a: float, b: float, tol: float = 1e-14) -> float:
    fa = float(_horner(coef, a))
    while b - a > tol * max(1.0, abs(b)):
        m = 0.5 * (a + b)
        fm = float(_horner(coef, m))
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def zero_crossings(poly: PiecewisePoly, horizon: float) -> np.ndarray:
    """Times in ``[0, horizon]`` where ``r`` changes sign."""
    if horizon > poly.horizon:
        raise ValueError(f"horizon {horizon} exceeds covered range {poly.horizon}")
    roots = []
    last_sign = 0.0
    for k, coef in enumerate(poly.pieces):
        t0 = k * poly.tau
        if t0 > horizon:
            break
        s_hi = min(poly.tau, horizon - t0)
        s = np.linspace(0.0, s_hi, _SCAN_POINTS)
        v = _horner(coef, s)
        for i in range(s.size):
            sg = np.sign(v[i])
            if sg == 0:
                continue
            if last_sign != 0 and sg != last_sign:
                # bracket lies within this piece unless the flip straddles a breakpoint
                a = s[i - 1] if i > 0 else 0.0
                roots.append(t0 + _refine_root(coef, a, s[i]))
            last_sign = sg
    return np.array(roots)


def sign_changes(poly: PiecewisePoly, horizon: float) -> int:
    return int(zero_crossings(poly, horizon).size)


# ---------------------------------------------------------------------------
# grid solver


@dataclass(frozen=True)
class History:
    """Initial data on the grid ``-tau, -tau + dt, ..., 0``.

    ``values[-1]`` is the left limit at 0 while ``at_zero`` is ``u(0)``; they
    differ only for the fundamental history.
    """

    values: np.ndarray
    at_zero: float
    label: str = "sampled"

    @classmethod
    def constant(cls, c: float, m: int) -> "History":
        return cls(np.full(m + 1, float(c)), float(c), f"constant({c:g})")

    @classmethod
    def fundamental(cls, m: int) -> "History":
        return cls(np.zeros(m + 1), 1.0, "fundamental")

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], tau: float, m: int) -> "History":
        t = np.linspace(-tau, 0.0, m + 1)
        v = np.asarray(f(t), dtype=float) * np.ones_like(t)
        return cls(v, float(v[-1]), "function")


HistoryLike = Union[float, History, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class SampledSolution:
    times: np.ndarray
    values: np.ndarray
    history: History
    tau: float
    dt: float


def steps_per_delay(tau: float, dt: float) -> int:
    """Integer ``m`` with ``m * dt == tau``; raises if ``dt`` does not divide ``tau``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if tau == 0.0:
        return 0
    m = int(round(tau / dt))
    if m < 1 or abs(m * dt - tau) > 1e-9 * tau:
        raise ValueError(f"dt={dt} does not divide tau={tau}")
    return m


def dde_solve(tau: float, history: HistoryLike, T: float, dt: float) -> SampledSolution:
    """Integrate ``u'(t) = -u(t - tau)`` on ``[0, T]`` with the explicit trapezoidal rule.

    The delayed values are read straight from the stored grid, so ``dt`` has
    to divide ``tau``. For ``tau = 0`` the rule becomes Heun's method for
    ``u' = -u``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    m = steps_per_delay(tau, dt)
    if isinstance(history, History):
        hist = history
        if hist.values.size != m + 1:
            raise ValueError(f"history has {hist.values.size} samples, expected {m + 1}")
    elif callable(history):
        hist = History.from_function(history, tau, m)
    else:
        hist = History.constant(float(history), m)
    n = int(math.floor(T / dt + 1e-9))
    u = np.empty(n + 1)
    u[0] = hist.at_zero
    times = np.arange(n + 1) * dt
    if m == 0:
        for i in range(n):
            pred = u[i] - dt * u[i]
            u[i + 1] = u[i] - 0.5 * dt * (u[i] + pred)
        return SampledSolution(times, u, hist, float(tau), float(dt))
    # method of steps: a block of m steps reads delayed values known already
    for start in range(0, n, m):
        stop = min(start + m, n)
        if start == 0:
            d = hist.values[: stop + 1]
        else:
            d = u[start - m: stop - m + 1]
        inc = -0.5 * dt * (d[:-1] + d[1:])
        u[start + 1: stop + 1] = u[start] + np.cumsum(inc)
    return SampledSolution(times, u, hist, float(tau), float(dt))
