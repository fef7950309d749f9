"""Continuous-time asymptotics of the log-gain sum and the variational schedule problem.

For a uniform grid with step h = 1/N the per-mode log-gain sum expands as

    S = I + E1 h + O(h^2),

where I = int F dt has the closed form 0.5 log(n(t0) / n(t1)) and

    E1 = -(mu / 2) int (alpha sigma' - sigma alpha')^2 / (alpha^2 mu + sigma^2)^2 dt  <= 0.

The KL divergence of the sampler output is then sum(E1^2) / N^2 + O(N^-3).
Writing eta = sigma / alpha, the E1 integrand becomes eta'^2 / (mu + eta^2)^2,
which the change of variables Q = arctan(eta / sqrt(mu)) / sqrt(mu) turns into
Q'^2; straight lines in Q give the tangent law.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, QuadratureError
from .kl_engine import TimeGrid, log_gain_sum
from .quadrature import integrate_adaptive
from .schedule import HALF_PI, NoiseSchedule
from .spectrum import Spectrum


# ---------------------------------------------------------------------------
# I and E1 for a schedule


def f_integrand(schedule: NoiseSchedule, mu: float) -> Callable[[float], float]:
    """F(t) = -(alpha alpha' mu + sigma sigma') / (alpha^2 mu + sigma^2)."""

    def f(t):
        a, s, ad, sd, _, _ = schedule.derivatives(t)
        return -(a * ad * mu + s * sd) / (a * a * mu + s * s)

    return f


def integral_I(schedule: NoiseSchedule, mu: float, t0: float = 0.0, t1: float = 1.0) -> float:
    """Closed form 0.5 log((alpha^2 mu + sigma^2)|t0 / (alpha^2 mu + sigma^2)|t1)."""
    a0, s0 = schedule.alpha_sigma(t0)
    a1, s1 = schedule.alpha_sigma(t1)
    n0 = a0 * a0 * mu + s0 * s0
    n1 = a1 * a1 * mu + s1 * s1
    if n0 <= 0 or n1 <= 0:
        raise DomainError("alpha^2 mu + sigma^2 vanishes at an endpoint")
    return 0.5 * (math.log(n0) - math.log(n1))


def integral_I_quadrature(schedule: NoiseSchedule, mu: float, t0: float = 0.0, t1: float = 1.0) -> float:
    return integrate_adaptive(f_integrand(schedule, mu), t0, t1)


def e1_integrand(schedule: NoiseSchedule, mu: float) -> Callable[[float], float]:
    def g(t):
        a, s, ad, sd, _, _ = schedule.derivatives(t)
        w = a * sd - s * ad
        den = a * a * mu + s * s
        return (w / den) ** 2

    return g


def e1_quadrature(schedule: NoiseSchedule, mu: float, t0: float = 0.0, t1: float = 1.0) -> float:
    """Leading 1/N coefficient of S for a uniform grid on [t0, t1] (scaled to unit length)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    val = integrate_adaptive(e1_integrand(schedule, mu), t0, t1)
    # a grid of N uniform steps on [t0, t1] has h = (t1 - t0) / N
    return -0.5 * mu * val * (t1 - t0)


def e1_tangent_closed(gamma: float, mu: float, theta: float) -> float:
    """E1 for eta = sqrt(gamma) tan(theta t); theta = pi/2 uses the VP limit."""
    if gamma <= 0 or mu <= 0:
        raise ValueError("gamma and mu must be positive")
    if not 0 < theta <= HALF_PI:
        raise ValueError("theta must lie in (0, pi/2]")
    if theta == HALF_PI:
        return -(math.pi ** 2 / 16.0) * (math.sqrt(mu / gamma) + math.sqrt(gamma / mu))
    tan_th = math.tan(theta)
    term1 = (mu + gamma) / math.sqrt(mu * gamma) * math.atan(math.sqrt(gamma / mu) * tan_th)
    term2 = (gamma - mu) * tan_th / (mu + gamma * tan_th * tan_th)
    return -0.25 * theta * (term1 + term2)


def residual(schedule: NoiseSchedule, n: int, mu: float, t0: float = 0.0, t1: float = 1.0) -> float:
    """r = S - I on the uniform grid of n steps over [t0, t1]; N r -> E1."""
    grid = TimeGrid.uniform(n, t0, t1)
    return log_gain_sum(schedule, grid, mu) - integral_I(schedule, mu, t0, t1)


def e1_vector(schedule: NoiseSchedule, spectrum: Spectrum, t0: float = 0.0, t1: float = 1.0) -> np.ndarray:
    return np.array([e1_quadrature(schedule, float(m), t0, t1) for m in spectrum.mu])


def predicted_kl(spectrum: Spectrum, schedule: NoiseSchedule, n, t0: float = 0.0, t1: float = 1.0):
    """Leading-order KL sum(E1^2) / N^2 for uniform grids; ``n`` may be an int or an array."""
    e1 = e1_vector(schedule, spectrum, t0, t1)
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise ValueError("N must be >= 1")
    out = float(np.sum(e1 * e1)) / n_arr ** 2
    return float(out) if n_arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# grids that are uniform in a warped coordinate u, expressed through lambda(u)


def _sech2(x):
    z = np.exp(-2.0 * np.abs(x))
    return 4.0 * z / (1.0 + z) ** 2


def e1_lambda_path(lam: Callable, lam_dot: Callable, mu: float) -> float:
    """E1 for a grid uniform in u in [0, 1] with half-logSNR lambda(u).

    With eta = exp(-lambda) the E1 integrand reduces to
    lambda'^2 / (4 mu cosh^2(lambda + log(mu) / 2)), independent of the
    schedule family.
    """
    shift = 0.5 * math.log(mu)

    def g(u):
        return lam_dot(u) ** 2 * _sech2(lam(u) + shift)

    return -0.125 * integrate_adaptive(g, 0.0, 1.0)


def predicted_kl_lambda_path(spectrum: Spectrum, lam: Callable, lam_dot: Callable, n) -> float:
    e1 = np.array([e1_lambda_path(lam, lam_dot, float(m)) for m in spectrum.mu])
    return float(np.sum(e1 * e1)) / float(n) ** 2


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True, eq=False)
class AsymptoticReport:
    I: np.ndarray
    E1: np.ndarray

    def predicted_kl_at(self, n):
        n = np.asarray(n, dtype=float)
        out = float(np.sum(self.E1 ** 2)) / n ** 2
        return float(out) if n.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"I": [float(v) for v in self.I], "E1": [float(v) for v in self.E1]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "I", "E1"])
        for i, (a, b) in enumerate(zip(self.I, self.E1)):
            w.writerow([i, repr(float(a)), repr(float(b))])
        return buf.getvalue()


def asymptotic_report(schedule: NoiseSchedule, spectrum: Spectrum, t0: float = 0.0,
                      t1: float = 1.0) -> AsymptoticReport:
    i_vals = np.array([integral_I(schedule, float(m), t0, t1) for m in spectrum.mu])
    return AsymptoticReport(I=i_vals, E1=e1_vector(schedule, spectrum, t0, t1))


# ---------------------------------------------------------------------------
# the variational problem in eta / Q space


@dataclass(frozen=True)
class EtaTrajectory:
    """A noise-to-signal path eta(t) on [0, 1] with its derivative.

    ``eta1`` may be ``math.inf`` to encode lim_{t->1} eta(t) = inf.
    """

    eta: Callable[[float], float]
    eta_dot: Callable[[float], float]
    eta0: float = 0.0
    eta1: float = math.inf
    label: str = field(default="", compare=False)

    @classmethod
    def from_schedule(cls, schedule: NoiseSchedule) -> "EtaTrajectory":
        def eta(t):
            a, s = schedule.alpha_sigma(t)
            return s / a if a != 0 else math.inf

        def eta_dot(t):
            a, s, ad, sd, _, _ = schedule.derivatives(t)
            return (a * sd - s * ad) / (a * a) if a != 0 else math.inf

        a1, s1 = schedule.alpha_sigma(1.0)
        a0, s0 = schedule.alpha_sigma(0.0)
        return cls(eta, eta_dot, s0 / a0, s1 / a1 if a1 != 0 else math.inf,
                   label=schedule.family.value)

    @classmethod
    def from_q(cls, q: Callable, q_dot: Callable, mu: float) -> "EtaTrajectory":
        """Map a Q-space path back to eta = sqrt(mu) tan(sqrt(mu) Q)."""
        rm = math.sqrt(mu)

        def eta(t):
            return rm * math.tan(rm * q(t))

        def eta_dot(t):
            c = math.cos(rm * q(t))
            return mu * q_dot(t) / (c * c)

        q1 = q(1.0)
        eta1 = math.inf if abs(rm * q1 - HALF_PI) < 1e-12 else eta(1.0)
        return cls(eta, eta_dot, eta(0.0), eta1, label="q-space")


def tangent_trajectory(mu: float) -> EtaTrajectory:
    """eta = sqrt(mu) tan(pi t / 2): the minimiser for the VP boundary."""
    rm = math.sqrt(mu)

    def eta(t):
        return rm * math.tan(HALF_PI * t)

    def eta_dot(t):
        c = math.cos(HALF_PI * t)
        return rm * HALF_PI / (c * c)

    return EtaTrajectory(eta, eta_dot, 0.0, math.inf, label="tangent")


def ve_tangent_law(mu: float, sigma_max: float) -> EtaTrajectory:
    """eta = sqrt(mu) tan(t arctan(sigma_max / sqrt(mu))), with eta(0) = 0, eta(1) = sigma_max."""
    if mu <= 0 or sigma_max <= 0:
        raise ValueError("mu and sigma_max must be positive")
    rm = math.sqrt(mu)
    th = math.atan(sigma_max / rm)

    def eta(t):
        if t == 1.0:
            return float(sigma_max)
        return rm * math.tan(th * t)

    def eta_dot(t):
        c = math.cos(th * t)
        return rm * th / (c * c)

    return EtaTrajectory(eta, eta_dot, 0.0, float(sigma_max), label="ve-tangent")


def q_transform(eta_value: float, mu: float) -> float:
    """Q = arctan(eta / sqrt(mu)) / sqrt(mu); Q(inf) = pi / (2 sqrt(mu))."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    rm = math.sqrt(mu)
    if math.isinf(eta_value):
        return math.copysign(HALF_PI, eta_value) / rm
    return math.atan(eta_value / rm) / rm


def functional_J(eta: EtaTrajectory, mu: float, epsabs: float = 1e-12, epsrel: float = 1e-10) -> float:
    """int_0^1 eta'^2 / (mu + eta^2)^2 dt, i.e. int Q'^2 dt."""

    def q_dot(t):
        e = eta.eta(t)
        ed = eta.eta_dot(t)
        if math.isinf(e):
            return 0.0
        return ed / (mu + e * e)

    try:
        return integrate_adaptive(lambda t: q_dot(t) ** 2, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel)
    except QuadratureError as exc:
        raise QuadratureError(f"functional J did not converge: {exc}") from None


# ---------------------------------------------------------------------------
# the global tangent coefficient


def objective_J_gamma(spectrum: Spectrum, gamma):
    """J(gamma) = gamma sum(1/mu) + sum(mu) / gamma; minimised at gamma_star."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gamma must be positive")
    out = g * spectrum.inverse_trace() + spectrum.trace() / g
    return float(out) if g.ndim == 0 else out


def loss_gamma(spectrum: Spectrum, gamma: float) -> float:
    """sum_l E1_l(gamma)^2 for the VP tangent law (the unscaled global objective)."""
    e1 = np.array([e1_tangent_closed(gamma, float(m), HALF_PI) for m in spectrum.mu])
    return float(np.sum(e1 * e1))


def log_grid_argmin(f: Callable, lo: float, hi: float, n: int) -> tuple[float, np.ndarray]:
    """Argmin of f over an n-point geometric grid on [lo, hi]; returns (best, grid)."""
    grid = np.geomspace(lo, hi, n)
    vals = np.array([f(g) for g in grid])
    return float(grid[int(np.argmin(vals))]), grid


def fd_second_derivative(f: Callable, x: float, rel_step: float = 1e-3) -> float:
    h = rel_step * x
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def slope_loglog(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit log y = slope log x + intercept; returns (slope, intercept, r^2)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# perturbations of the tangent law for optimality checks


def sine_perturbation(coeffs: Sequence[float]) -> tuple[Callable, Callable, float]:
    """delta(t) = sum c_n sin(n pi t), its derivative, and int delta'^2 = sum (c_n n pi)^2 / 2."""
    c = np.asarray(coeffs, dtype=float)
    n = np.arange(1, c.size + 1, dtype=float)
    w = n * math.pi

    def delta(t):
        return float(np.dot(c, np.sin(w * t)))

    def delta_dot(t):
        return float(np.dot(c * w, np.cos(w * t)))

    return delta, delta_dot, float(0.5 * np.sum((c * w) ** 2))


def perturbed_tangent(mu: float, coeffs: Sequence[float]) -> tuple[EtaTrajectory, float]:
    """Tangent law plus a zero-boundary Q-space perturbation; returns (trajectory, int delta'^2)."""
    rm = math.sqrt(mu)
    slope = HALF_PI / rm
    delta, delta_dot, energy = sine_perturbation(coeffs)
    traj = EtaTrajectory.from_q(lambda t: slope * t + delta(t), lambda t: slope + delta_dot(t), mu)
    return traj, energy
