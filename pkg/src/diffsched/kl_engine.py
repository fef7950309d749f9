"""Exact per-mode analysis of the deterministic DDIM sampler on a Gaussian source.

In the eigenbasis of the source covariance the reverse recursion with the
optimal (linear) denoiser multiplies each mode by a gain

    d_j = (alpha_{j-1} alpha_j mu + sigma_{j-1} sigma_j) / (alpha_j^2 mu + sigma_j^2)

per step, so the output covariance eigenvalue is
m = sigma_init^2 prod_j d_j^2, while the exact marginal at the final time has
eigenvalue n = alpha_{t0}^2 mu + sigma_{t0}^2.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGainError
from .schedule import NoiseSchedule
from .spectrum import Spectrum


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Sampling times stored in increasing order t_0 < ... < t_N.

    The reverse sampler walks the array backwards, from ``times[-1]`` to
    ``times[0]``. Repeated times are allowed and act as identity steps.
    """

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1).copy()
        if t.size < 2:
            raise ValueError("a time grid needs at least two points (N >= 1)")
        if np.any(np.diff(t) < 0):
            raise ValueError("grid times must be non-decreasing in index (t_0 is the final time)")
        if t[0] < 0.0 or t[-1] > 1.0:
            raise ValueError("grid times must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, n: int, t0: float = 0.0, t1: float = 1.0) -> "TimeGrid":
        """t_j = t0 + (j / N)(t1 - t0); with the defaults, t_j = j / N."""
        j = np.arange(n + 1, dtype=float)
        t = t0 + (j / n) * (t1 - t0)
        t[-1] = t1
        return cls(t)

    @classmethod
    def from_sampler_order(cls, timesteps) -> "TimeGrid":
        """Build from a sequence ordered as the sampler visits it (decreasing t)."""
        return cls(np.asarray(timesteps, dtype=float)[::-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def start(self) -> float:
        return float(self.times[-1])

    @property
    def end(self) -> float:
        return float(self.times[0])

    def sampler_order(self) -> np.ndarray:
        return self.times[::-1].copy()


def _gains(schedule: NoiseSchedule, times: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Matrix of gains, shape (k, N); row l holds d_{1,l} ... d_{N,l}."""
    a, s = schedule.alpha_sigma(times)
    a = np.asarray(a)
    s = np.asarray(s)
    a_prev, s_prev = a[:-1], s[:-1]
    a_cur, s_cur = a[1:], s[1:]
    mu = mu[:, None]
    den = a_cur * a_cur * mu + s_cur * s_cur
    num = a_prev * a_cur * mu + s_prev * s_cur
    return num / den, den, a_cur * (a_prev - a_cur) * mu + s_cur * (s_prev - s_cur)


def mode_gain(schedule: NoiseSchedule, t_prev: float, t_cur: float, mu: float) -> float:
    """Single-step gain d for one mode, stepping from t_cur down to t_prev."""
    a0, s0 = schedule.alpha_sigma(t_prev)
    a1, s1 = schedule.alpha_sigma(t_cur)
    return (a0 * a1 * mu + s0 * s1) / (a1 * a1 * mu + s1 * s1)


def _log_gains(schedule, grid, mu):
    d, den, diff = _gains(schedule, grid.times, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        # log1p of the (directly computed) relative increment keeps precision when d ~ 1
        logs = np.log1p(diff / den)
    return d, logs


def log_gain_sum(schedule: NoiseSchedule, grid: TimeGrid, mu: float) -> float:
    """S = sum_j log d_j for one mode. Equals 0.5 log m - log sigma_init."""
    d, logs = _log_gains(schedule, grid, np.array([float(mu)]))
    if np.any(d <= 0.0):
        j = int(np.flatnonzero(d[0] <= 0.0)[0]) + 1
        raise DegenerateGainError(f"gain d_{j} = {d[0, j - 1]!r} is not positive")
    return float(np.sum(logs[0]))


def log_gain_sums(schedule: NoiseSchedule, grid: TimeGrid, spectrum: Spectrum) -> np.ndarray:
    """Vector of S_l for every mode; -inf where some gain vanishes."""
    d, logs = _log_gains(schedule, grid, spectrum.mu)
    dead = np.any(d == 0.0, axis=1)
    absd = np.abs(d)
    with np.errstate(divide="ignore"):
        # negative gains (never produced by the shipped families) enter through |d|
        logs = np.where(d > 0.0, logs, np.log(absd))
    out = np.sum(logs, axis=1)
    out[dead] = -math.inf
    return out


def output_eigenvalues(schedule: NoiseSchedule, grid: TimeGrid, spectrum: Spectrum) -> np.ndarray:
    """m_l = sigma_init^2 exp(2 S_l), accumulated in log space (0 for a degenerate mode)."""
    s = log_gain_sums(schedule, grid, spectrum)
    sig = schedule.prior_std(grid.start)
    return np.exp(2.0 * (s + math.log(sig)))


def reference_eigenvalues(schedule: NoiseSchedule, t0: float, spectrum: Spectrum) -> np.ndarray:
    """n_l = alpha(t0)^2 mu_l + sigma(t0)^2."""
    a, s = schedule.alpha_sigma(float(t0))
    return a * a * spectrum.mu + s * s


def kl_divergence(m, n) -> float:
    """0.5 sum (m/n - log(m/n) - 1); +inf if any m is zero."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    if m.shape != n.shape:
        raise ValueError(f"dimension mismatch: {m.shape} vs {n.shape}")
    if np.any(n <= 0):
        raise ValueError("reference eigenvalues must be positive")
    if np.any(m < 0):
        raise ValueError("output eigenvalues must be non-negative")
    if np.any(m == 0):
        return math.inf
    x = np.log(m) - np.log(n)
    # e^x - x - 1 with expm1 to stay accurate for |x| << 1
    return float(0.5 * np.sum(np.expm1(x) - x))


@dataclass(frozen=True, eq=False)
class KlReport:
    m: np.ndarray
    n: np.ndarray
    log_ratio: np.ndarray
    kl_total: float

    def to_dict(self) -> dict:
        return {
            "m": [float(v) for v in self.m],
            "n": [float(v) for v in self.n],
            "kl": "inf" if math.isinf(self.kl_total) else float(self.kl_total),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "m", "n", "log_ratio", "kl"])
        for i, (mi, ni, ri) in enumerate(zip(self.m, self.n, self.log_ratio)):
            w.writerow([i, repr(float(mi)), repr(float(ni)), repr(float(ri)), repr(_mode_kl(mi, ni))])
        w.writerow(["total", "", "", "", repr(float(self.kl_total))])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, doc: dict) -> "KlReport":
        m = np.asarray(doc["m"], dtype=float)
        n = np.asarray(doc["n"], dtype=float)
        kl = math.inf if doc["kl"] == "inf" else float(doc["kl"])
        with np.errstate(divide="ignore"):
            lr = 0.5 * (np.log(m) - np.log(n))
        return cls(m, n, lr, kl)


def _mode_kl(m, n):
    if m == 0:
        return math.inf
    x = math.log(m) - math.log(n)
    return 0.5 * (math.expm1(x) - x)


def kl_report(schedule: NoiseSchedule, grid: TimeGrid, spectrum: Spectrum) -> KlReport:
    """Full analysis of one (schedule, grid, spectrum) triple; reference taken at grid.end."""
    m = output_eigenvalues(schedule, grid, spectrum)
    n = reference_eigenvalues(schedule, grid.end, spectrum)
    with np.errstate(divide="ignore"):
        lr = 0.5 * (np.log(m) - np.log(n))
    return KlReport(m=m, n=n, log_ratio=lr, kl_total=kl_divergence(m, n))


def exact_kl(schedule: NoiseSchedule, grid: TimeGrid, spectrum: Spectrum) -> float:
    return kl_report(schedule, grid, spectrum).kl_total
