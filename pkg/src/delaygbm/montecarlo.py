"""Euler-Maruyama ensembles for ``dw = -w(t - tau) dt + sigma w(t - tau) dB``.

Noise for path ``i`` comes from a Philox generator keyed by ``(seed, i)``, so
step ``k`` of any path can be regenerated on its own and ensembles are
bit-identical however they are split across workers. Paths are simulated in
fixed-size chunks; per-chunk statistics are merged in chunk order with
Chan's pairwise update.

The ensemble reports ``y(t) = E[w(t)^2 / 2]`` together with its standard
error. On top of that sit a log-linear decay fit, a noise-tolerant
monotonicity test, the Lyapunov functional descent check and the
forward-backward bound on ``y``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .conditions import ReducedParams, mu1_ok
from .fundamental import steps_per_delay

#: Paths per chunk. Fixed so that results do not depend on ``n_workers``.
CHUNK_PATHS = 2048

HistorySpec = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class SimConfig:
    tau: float
    sigma: float
    dt: float
    T: float
    n_paths: int
    seed: int = 20240101
    history: HistorySpec = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < self.dt:
            raise ValueError(f"T={self.T} shorter than one step dt={self.dt}")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        steps_per_delay(self.tau, self.dt)

    @property
    def m(self) -> int:
        """Steps per delay; 0 when there is no delay."""
        return steps_per_delay(self.tau, self.dt)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.T / self.dt + 1e-9))

    @property
    def constant_history(self) -> Optional[float]:
        return None if callable(self.history) else float(self.history)

    def history_values(self) -> np.ndarray:
        """History on the grid ``-tau, ..., 0`` (length ``m + 1``)."""
        m = self.m
        if callable(self.history):
            t = np.linspace(-self.tau, 0.0, m + 1)
            return np.asarray(self.history(t), dtype=float) * np.ones(m + 1)
        return np.full(m + 1, float(self.history))

    def record_indices(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.record_every)
        return idx

    def times(self) -> np.ndarray:
        return self.record_indices() * self.dt


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    key = np.array([seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _noise(cfg: SimConfig, first: int, count: int) -> np.ndarray:
    """Standard normals, row ``i`` for path ``first + i``, column ``k`` for step ``k``."""
    out = np.empty((count, cfg.n_steps))
    for i in range(count):
        out[i] = path_generator(cfg.seed, first + i).standard_normal(cfg.n_steps)
    return out


def _simulate_block(cfg: SimConfig, first: int, count: int) -> np.ndarray:
    """Full grid for a block of paths; column ``c`` is time ``(c - m) * dt``."""
    m, n, dt = cfg.m, cfg.n_steps, cfg.dt
    w = np.empty((count, m + n + 1))
    w[:, : m + 1] = cfg.history_values()
    if cfg.sigma == 0.0:
        # every path follows the same deterministic recursion
        row = w[0]
        for k in range(n):
            row[m + k + 1] = row[m + k] - row[k] * dt
        w[1:] = row
        return w
    xi = _noise(cfg, first, count)
    vol = cfg.sigma * math.sqrt(dt)
    for k in range(n):
        delayed = w[:, k]
        w[:, m + k + 1] = w[:, m + k] + delayed * (vol * xi[:, k] - dt)
    return w


def simulate_path(cfg: SimConfig, path_index: int) -> np.ndarray:
    """One path on the full grid from ``t = 0`` to ``n_steps * dt``.

    Uses ``w[k+1] = w[k] - w[k-m] dt + sigma w[k-m] sqrt(dt) xi[k]``.
    """
    return _simulate_block(cfg, path_index, 1)[0, cfg.m:]


def _chunks(n_paths: int) -> list[tuple[int, int]]:
    return [(a, min(CHUNK_PATHS, n_paths - a)) for a in range(0, n_paths, CHUNK_PATHS)]


@dataclass
class _Moments:
    """Running count, mean and sum of squared deviations per column."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        mean = x.mean(axis=0)
        return cls(x.shape[0], mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        return _Moments(n, mean, m2)

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _ensemble(cfg: SimConfig, stat: Callable[[np.ndarray], np.ndarray], n_workers: int = 1) -> _Moments:
    def run(chunk):
        first, count = chunk
        return _Moments.of(stat(_simulate_block(cfg, first, count)))

    if cfg.sigma == 0.0:
        # all paths coincide: one suffices and the spread is exactly zero
        x = stat(_simulate_block(cfg, 0, 1))
        return _Moments(cfg.n_paths, x[0], np.zeros_like(x[0]))
    chunks = _chunks(cfg.n_paths)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    return total


@dataclass(frozen=True)
class MeanSquareSeries:
    times: np.ndarray
    y: np.ndarray
    stderr: np.ndarray
    n_paths: int
    tau: float
    sigma: float

    def mean_square(self) -> np.ndarray:
        """``E[w^2]``, i.e. twice ``y``."""
        return 2.0 * self.y


def ensemble_mean_square(cfg: SimConfig, n_workers: int = 1) -> MeanSquareSeries:
    idx = cfg.record_indices() + cfg.m

    def stat(w):
        v = w[:, idx]
        return 0.5 * v * v

    mom = _ensemble(cfg, stat, n_workers)
    return MeanSquareSeries(cfg.times(), mom.mean, mom.stderr(), cfg.n_paths, cfg.tau, cfg.sigma)


# ---------------------------------------------------------------------------
# decay fit and monotonicity


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    window: tuple[float, float]
    goodness: float
    stderr: float


def fit_decay(series: MeanSquareSeries, window: Optional[tuple[float, float]] = None) -> DecayFit:
    """Least-squares line through ``(t, log y)``; ``rate`` is the slope.

    ``stderr`` propagates the per-time standard errors through the linear fit
    assuming perfectly correlated errors, i.e. ``sum |c_i| se_i / y_i`` for fit
    weights ``c_i``. This bounds the delta-method error from above.
    """
    t = series.times
    lo, hi = window if window is not None else (t[0], t[-1])
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 2:
        raise ValueError(f"window {lo, hi} holds fewer than two samples")
    tt, yy, se = t[sel], series.y[sel], series.stderr[sel]
    if np.any(yy <= 0):
        raise ValueError("non-positive mean square in fit window (Monte Carlo noise floor reached)")
    z = np.log(yy)
    tc = tt - tt.mean()
    sxx = float(np.dot(tc, tc))
    c = tc / sxx
    rate = float(np.dot(c, z))
    intercept = float(z.mean() - rate * tt.mean())
    resid = z - (intercept + rate * tt)
    ss_tot = float(np.dot(z - z.mean(), z - z.mean()))
    goodness = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
    stderr = float(np.sum(np.abs(c) * se / yy))
    return DecayFit(rate, intercept, (float(tt[0]), float(tt[-1])), goodness, stderr)


def check_monotone(series: MeanSquareSeries, z_slack: float = 3.0) -> bool:
    """Non-increasing ``y`` up to ``z_slack`` standard errors between neighbours."""
    y, se = series.y, series.stderr
    return bool(np.all(y[1:] <= y[:-1] + z_slack * (se[1:] + se[:-1])))


# ---------------------------------------------------------------------------
# Lyapunov functional


@dataclass(frozen=True)
class LyapCoeffs:
    delta: float
    p: float
    q: float


def lyapunov_coeffs(p: ReducedParams) -> LyapCoeffs:
    """Coefficients that minimise the Lyapunov bound.

    ``delta = (tau (sqrt(tau) + sigma)^2)^(-1/2)``, ``p = delta (sqrt(tau) + sigma)^2``
    and ``q = 2 - 1/delta``.
    """
    if not p.tau > 0:
        raise ValueError("the Lyapunov functional needs a positive delay")
    a = (math.sqrt(p.tau) + p.sigma) ** 2
    delta = 1.0 / math.sqrt(p.tau * a)
    coeffs = LyapCoeffs(delta, delta * a, 2.0 - 1.0 / delta)
    s2 = p.sigma * p.sigma
    if s2 < 2.0 and p.tau < 1.0 - 0.5 * p.sigma * math.sqrt(4.0 - s2):
        assert coeffs.p > 0 and coeffs.q > 0, coeffs
    return coeffs


def _trapezoid_weights(m: int, dt: float) -> np.ndarray:
    w = np.full(m + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def lyapunov_paths(w: np.ndarray, m: int, dt: float, coeffs: LyapCoeffs) -> np.ndarray:
    """``L`` at every grid time ``t >= tau`` for each row of a full-grid path block.

    Column ``j`` of the result is time ``(m + j) * dt``. The double integral is
    rewritten as ``int_{t-tau}^t (s - t + tau) w(s - tau)^2 ds``.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    sq = w * w
    wq = _trapezoid_weights(m, dt)
    wp = wq * (np.arange(m + 1) * dt)
    win = np.lib.stride_tricks.sliding_window_view(sq, m + 1, axis=1)
    # window starting at column c covers grid indices c - m .. c
    ncols = sq.shape[1] - 2 * m
    current = win[:, m: m + ncols] @ wq  # int_{t-tau}^t w^2, for t index n >= m
    lagged = win[:, :ncols] @ wp  # int (s - t + tau) w(s - tau)^2
    now = sq[:, 2 * m: 2 * m + ncols]
    return now + coeffs.q * current + coeffs.p * lagged


@dataclass(frozen=True)
class LyapunovSeries:
    """Ensemble statistics of the Lyapunov functional on grid times ``t >= tau``.

    ``excess[k]`` is the mean over paths of
    ``(L(t_{k+1}) - L(t_k)) / h + kappa * (w(t_k - tau)^2 + w(t_{k+1} - tau)^2) / 2``,
    an estimate of ``dE[L]/dt + kappa E[w(t - tau)^2]`` on each interval.
    It is only filled when a ``kappa`` is supplied.
    """

    times: np.ndarray
    L: np.ndarray
    L_stderr: np.ndarray
    delayed_sq: np.ndarray
    delayed_sq_stderr: np.ndarray
    kappa: Optional[float] = None
    excess: Optional[np.ndarray] = None
    excess_stderr: Optional[np.ndarray] = None


def estimate_lyapunov(cfg: SimConfig, coeffs: LyapCoeffs, kappa: Optional[float] = None,
                      t_min: Optional[float] = None, n_workers: int = 1) -> LyapunovSeries:
    m, dt = cfg.m, cfg.dt
    if m < 1:
        raise ValueError("the Lyapunov functional needs a positive delay")
    t_min = cfg.tau if t_min is None else t_min
    if t_min < cfg.tau - 1e-12:
        raise ValueError(f"L(t) needs t >= tau = {cfg.tau}, got {t_min}")
    rec = cfg.record_indices()
    rec = rec[rec * dt >= t_min - 1e-12]
    if rec.size < 1:
        raise ValueError("no recorded times at or after t_min")
    cols_L = rec - m  # columns of lyapunov_paths output
    cols_w = rec  # grid index n - m sits at column n of the full grid
    h = np.diff(rec) * dt
    nl = rec.size

    def stat(w):
        L = lyapunov_paths(w, m, dt, coeffs)[:, cols_L]
        d2 = w[:, cols_w] ** 2
        parts = [L, d2]
        if kappa is not None:
            parts.append(np.diff(L, axis=1) / h + kappa * 0.5 * (d2[:, 1:] + d2[:, :-1]))
        return np.concatenate(parts, axis=1)

    mom = _ensemble(cfg, stat, n_workers)
    mean, se = mom.mean, mom.stderr()
    out = dict(
        times=rec * dt,
        L=mean[:nl], L_stderr=se[:nl],
        delayed_sq=mean[nl: 2 * nl], delayed_sq_stderr=se[nl: 2 * nl],
    )
    if kappa is not None:
        out.update(kappa=kappa, excess=mean[2 * nl:], excess_stderr=se[2 * nl:])
    return LyapunovSeries(**out)


def check_lyapunov_descent(series: LyapunovSeries, z_slack: float = 3.0) -> bool:
    """``dE[L]/dt <= -kappa E[w(t - tau)^2]`` on every interval, within ``z_slack`` stderr."""
    if series.excess is None:
        raise ValueError("series was estimated without kappa")
    return bool(np.all(series.excess <= z_slack * series.excess_stderr))


# ---------------------------------------------------------------------------
# forward-backward bound


def _interp_y(series: MeanSquareSeries, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # constant extension for t < 0
    y = np.interp(t, series.times, series.y, left=series.y[0])
    se = np.interp(t, series.times, series.stderr, left=series.stderr[0])
    return y, se


def forward_backward_check(series: MeanSquareSeries, mu: float,
                           sample_pairs: Iterable[Sequence[float]], z_slack: float = 3.0) -> bool:
    """Test ``exp(-2 mu s) y(t) < y(t - s) < exp(2 mu s) y(t)`` at each ``(t, s)``.

    Values between recorded times are interpolated linearly; ``y`` is held at
    its initial value for negative arguments. ``s = 0`` passes trivially.
    """
    if not mu > 1:
        raise ValueError(f"mu must exceed 1, got {mu}")
    if not mu1_ok(series.tau, mu, series.sigma) and not _mu1_equal(series.tau, mu, series.sigma):
        raise ValueError(f"mu={mu} violates 2 e^(mu tau) + sigma^2 e^(2 mu tau) <= 2 mu")
    pairs = np.asarray(list(sample_pairs), dtype=float).reshape(-1, 2)
    t, s = pairs[:, 0], pairs[:, 1]
    if np.any(s < 0):
        raise ValueError("s must be non-negative")
    if np.any(t > series.times[-1] + 1e-12) or np.any(t < 0):
        raise ValueError("t outside the simulated range")
    yt, set_ = _interp_y(series, t)
    yb, seb = _interp_y(series, t - s)
    grow = np.exp(2.0 * mu * s)
    shrink = 1.0 / grow
    lower_ok = shrink * yt < yb + z_slack * (seb + shrink * set_)
    upper_ok = yb < grow * yt + z_slack * (seb + grow * set_)
    ok = (lower_ok & upper_ok) | (s == 0)
    return bool(np.all(ok))


def _mu1_equal(tau: float, mu: float, sigma: float) -> bool:
    e = math.exp(mu * tau)
    return math.isclose(2.0 * e + sigma * sigma * e * e, 2.0 * mu, rel_tol=1e-12)
