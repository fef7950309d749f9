"""Noise schedules (alpha(t), sigma(t)) on t in [0, 1].

t = 0 is clean data and t = 1 is maximum noise. Every schedule exposes
analytic first and second derivatives, the noise-to-signal ratio
eta = sigma / alpha and the half-logSNR lambda = log(alpha / sigma) together
with its inverse.

All schedule objects are frozen dataclasses, so they are hashable and safe to
share between threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DomainError, LambdaRangeError

HALF_PI = 0.5 * math.pi

# Interior time domain used by lambda-based defaults for VP families.
VP_T_LO = 1e-5
VP_T_HI = 1.0 - 1e-5
LAMBDA_SNAP = 1e-13


class Family(str, enum.Enum):
    VP_COSINE = "vp_cosine"
    VE_GEOMETRIC = "ve_geometric"
    TANGENT_LAW = "tangent"
    DDPM_LINEAR = "ddpm_linear"
    FLOW_LINEAR = "flow_linear"


class Setting(str, enum.Enum):
    VP = "VP"
    VE = "VE"


@dataclass(frozen=True)
class SchedulePoint:
    t: float
    alpha: float
    sigma: float
    alpha_dot: float
    sigma_dot: float
    alpha_ddot: float
    sigma_ddot: float


def _as_array(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def _out(x, scalar):
    return float(x) if scalar else x


class NoiseSchedule:
    """Base class. Subclasses implement ``_coefficients`` and ``_lambda``."""

    family: Family
    setting: Setting

    # -- to be provided by subclasses -------------------------------------
    def _coefficients(self, t: np.ndarray):
        """Return (alpha, sigma, alpha_dot, sigma_dot, alpha_ddot, sigma_ddot)."""
        raise NotImplementedError

    def _lambda(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _invert_closed(self, lam: np.ndarray):
        return None

    def lambda_interval(self) -> tuple[float, float]:
        """Closed-or-open interval (lo, hi) of attainable finite lambda values."""
        raise NotImplementedError

    def params(self) -> dict[str, float]:
        raise NotImplementedError

    # -- public API --------------------------------------------------------
    def _check_t(self, t):
        if np.any((t < 0.0) | (t > 1.0)) or np.any(np.isnan(t)):
            raise DomainError(f"time outside [0, 1]: {t}")

    def alpha_sigma(self, t):
        arr, scalar = _as_array(t)
        self._check_t(arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            a, s, *_ = self._coefficients(arr)
        return _out(a, scalar), _out(s, scalar)

    def alpha(self, t):
        return self.alpha_sigma(t)[0]

    def sigma(self, t):
        return self.alpha_sigma(t)[1]

    def derivatives(self, t):
        """Values and derivatives as a 6-tuple of arrays (or floats)."""
        arr, scalar = _as_array(t)
        self._check_t(arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._coefficients(arr)
        if scalar:
            return tuple(float(x) for x in out)
        return tuple(np.broadcast_to(x, arr.shape).astype(float) for x in out)

    def eval(self, t: float) -> SchedulePoint:
        a, s, ad, sd, add, sdd = self.derivatives(float(t))
        return SchedulePoint(float(t), a, s, ad, sd, add, sdd)

    def eta(self, t):
        """Noise-to-signal ratio sigma / alpha."""
        a, s = self.alpha_sigma(t)
        a_arr = np.asarray(a)
        if np.any(a_arr == 0.0):
            raise DomainError("eta diverges where alpha = 0")
        return s / a

    def half_logsnr(self, t):
        """lambda(t) = log(alpha(t) / sigma(t)); strictly decreasing in t."""
        arr, scalar = _as_array(t)
        self._check_t(arr)
        a, s = self.alpha_sigma(arr)
        if np.any(a == 0.0) or np.any(s == 0.0):
            raise DomainError("half-logSNR is undefined where alpha or sigma vanishes")
        with np.errstate(divide="ignore"):
            lam = self._lambda(arr)
        return _out(lam, scalar)

    def invert_lambda(self, lam):
        """Time t with half_logsnr(t) == lam; closed form when available, else bisection."""
        arr, scalar = _as_array(lam)
        lo, hi = self.lambda_interval()
        # values a few ulps past a finite endpoint come from evaluating lambda
        # at that endpoint by a different formula; snap them back
        slack_lo = LAMBDA_SNAP * max(1.0, abs(lo)) if math.isfinite(lo) else 0.0
        slack_hi = LAMBDA_SNAP * max(1.0, abs(hi)) if math.isfinite(hi) else 0.0
        bad = ~np.isfinite(arr) | (arr < lo - slack_lo) | (arr > hi + slack_hi)
        if np.any(bad):
            idx = int(np.flatnonzero(np.atleast_1d(bad))[0])
            raise LambdaRangeError(
                f"lambda={np.atleast_1d(arr)[idx]!r} outside attainable interval [{lo}, {hi}]",
                index=idx,
            )
        arr = np.clip(arr, lo, hi)
        t = self._invert_closed(arr)
        if t is None:
            t = np.vectorize(self.invert_lambda_bisect, otypes=[float])(arr)
        t = np.clip(t, 0.0, 1.0)
        return _out(t, scalar)

    def invert_lambda_bisect(self, lam: float, tol: float = 1e-15) -> float:
        """Monotone bisection on lambda(t) over [0, 1]."""
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi or hi - lo <= tol:
                break
            if self._lambda_safe(mid) > lam:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _lambda_safe(self, t: float) -> float:
        with np.errstate(divide="ignore"):
            return float(self._lambda(np.asarray(t)))

    def lambda_range(self, t_lo: float | None = None, t_hi: float | None = None) -> tuple[float, float]:
        """(lambda(t_hi), lambda(t_lo)) on a clamped interior domain."""
        if t_lo is None:
            t_lo = VP_T_LO if self.setting is Setting.VP else 0.0
        if t_hi is None:
            t_hi = VP_T_HI if self.setting is Setting.VP else 1.0
        return self.half_logsnr(t_hi), self.half_logsnr(t_lo)

    def prior_std(self, t_start: float) -> float:
        """Standard deviation of the reverse-sampler initialisation at t_start."""
        if self.setting is Setting.VP:
            return 1.0
        return float(self.sigma(t_start))

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = {"family": self.family.value}
        for key, val in self.params().items():
            spec[key] = "inf" if val == math.inf else val
        return spec


@dataclass(frozen=True)
class VPCosine(NoiseSchedule):
    """alpha = cos(pi t / 2), sigma = sin(pi t / 2)."""

    family = Family.VP_COSINE
    setting = Setting.VP

    def _coefficients(self, t):
        w = HALF_PI
        a = np.cos(w * t)
        s = np.sin(w * t)
        a = np.where(t == 1.0, 0.0, a)
        return a, s, -w * s, w * a, -w * w * a, -w * w * s

    def _lambda(self, t):
        return -np.log(np.tan(HALF_PI * t))

    def _invert_closed(self, lam):
        return (2.0 / np.pi) * np.arctan(np.exp(-lam))

    def lambda_interval(self):
        return (-math.inf, math.inf)

    def params(self):
        return {}


@dataclass(frozen=True)
class VEGeometric(NoiseSchedule):
    """alpha = 1, sigma = sigma_min (sigma_max / sigma_min)^t."""

    sigma_min: float = 0.01
    sigma_max: float = 80.0

    family = Family.VE_GEOMETRIC
    setting = Setting.VE

    def __post_init__(self):
        if not (self.sigma_min > 0 and self.sigma_max > self.sigma_min):
            raise ValueError("need 0 < sigma_min < sigma_max")

    @property
    def _log_ratio(self):
        return math.log(self.sigma_max / self.sigma_min)

    def _coefficients(self, t):
        c = self._log_ratio
        s = self.sigma_min * np.exp(c * t)
        s = np.where(t == 1.0, self.sigma_max, s)
        one = np.ones_like(t)
        zero = np.zeros_like(t)
        return one, s, zero, c * s, zero, c * c * s

    def _lambda(self, t):
        return -math.log(self.sigma_min) - self._log_ratio * t

    def _invert_closed(self, lam):
        return (-lam - math.log(self.sigma_min)) / self._log_ratio

    def lambda_interval(self):
        return (-math.log(self.sigma_max), -math.log(self.sigma_min))

    def lambda_range(self, t_lo=None, t_hi=None):
        if t_lo is None and t_hi is None:
            return self.lambda_interval()
        return super().lambda_range(t_lo, t_hi)

    def params(self):
        return {"sigma_min": self.sigma_min, "sigma_max": self.sigma_max}


@dataclass(frozen=True)
class TangentLaw(NoiseSchedule):
    """eta(t) = sqrt(gamma) tan(theta t), theta = arctan(eta1 / sqrt(gamma)).

    Represented in VP-constrained form alpha = 1/sqrt(1+eta^2),
    sigma = eta/sqrt(1+eta^2). With eta1 = inf the schedule reaches alpha(1) = 0;
    a finite eta1 is the VE boundary eta(1) = sigma_max and the schedule is
    tagged VE, so the sampler starts from the std sigma(t_N). The KL divergence
    depends on the schedule only through eta, so this representation gives the
    same results as alpha = 1, sigma = eta.
    """

    gamma: float = 1.0
    eta1: float = math.inf

    family = Family.TANGENT_LAW

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.eta1 > 0:
            raise ValueError("eta1 must be positive (or inf)")

    @property
    def setting(self):
        return Setting.VP if math.isinf(self.eta1) else Setting.VE

    @property
    def theta(self) -> float:
        if math.isinf(self.eta1):
            return HALF_PI
        return math.atan(self.eta1 / math.sqrt(self.gamma))

    def _coefficients(self, t):
        g, th = self.gamma, self.theta
        rg = math.sqrt(g)
        c = np.cos(th * t)
        s = np.sin(th * t)
        if math.isinf(self.eta1):
            c = np.where(t == 1.0, 0.0, c)
            s = np.where(t == 1.0, 1.0, s)
        den = c * c + g * s * s
        root = np.sqrt(den)
        a = c / root
        sg = rg * s / root
        # phi = arctan(eta): alpha = cos(phi), sigma = sin(phi)
        phi_d = rg * th / den
        phi_dd = -rg * th * th * 2.0 * (g - 1.0) * s * c / (den * den)
        ad = -sg * phi_d
        sd = a * phi_d
        add = -a * phi_d * phi_d - sg * phi_dd
        sdd = -sg * phi_d * phi_d + a * phi_dd
        return a, sg, ad, sd, add, sdd

    def eta(self, t):
        arr, scalar = _as_array(t)
        self._check_t(arr)
        if math.isinf(self.eta1) and np.any(arr == 1.0):
            raise DomainError("tangent law with eta1=inf diverges at t=1")
        return _out(math.sqrt(self.gamma) * np.tan(self.theta * arr), scalar)

    def _lambda(self, t):
        return -0.5 * math.log(self.gamma) - np.log(np.tan(self.theta * t))

    def _invert_closed(self, lam):
        return np.arctan(np.exp(-lam) / math.sqrt(self.gamma)) / self.theta

    def lambda_interval(self):
        if math.isinf(self.eta1):
            return (-math.inf, math.inf)
        return (-math.log(self.eta1), math.inf)

    def params(self):
        return {"gamma": self.gamma, "eta1": self.eta1}


@dataclass(frozen=True)
class DDPMLinear(NoiseSchedule):
    """Linear-beta VP schedule: log alpha = -(beta_min t + (beta_max - beta_min) t^2 / 2) / 2."""

    beta_min: float = 0.1
    beta_max: float = 20.0

    family = Family.DDPM_LINEAR
    setting = Setting.VP

    def __post_init__(self):
        if not (self.beta_min > 0 and self.beta_max >= self.beta_min):
            raise ValueError("need 0 < beta_min <= beta_max")

    def _integrated_beta(self, t):
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t

    def _coefficients(self, t):
        db = self.beta_max - self.beta_min
        big_b = self._integrated_beta(t)
        beta = self.beta_min + db * t
        a = np.exp(-0.5 * big_b)
        s = np.sqrt(-np.expm1(-big_b))
        ad = -0.5 * beta * a
        add = a * (0.25 * beta * beta - 0.5 * db)
        sd = a * a * beta / (2.0 * s)
        sdd = -(ad * ad + a * add + sd * sd) / s
        return a, s, ad, sd, add, sdd

    def _lambda(self, t):
        big_b = self._integrated_beta(t)
        return -0.5 * big_b - 0.5 * np.log(-np.expm1(-big_b))

    def lambda_interval(self):
        return (self._lambda_safe(1.0), math.inf)

    def lambda_range(self, t_lo=None, t_hi=None):
        if t_hi is None:
            t_hi = 1.0
        return super().lambda_range(t_lo, t_hi)

    def params(self):
        return {"beta_min": self.beta_min, "beta_max": self.beta_max}


@dataclass(frozen=True)
class FlowLinear(NoiseSchedule):
    """Rectified-flow interpolation alpha = 1 - t, sigma = t (not variance preserving)."""

    family = Family.FLOW_LINEAR
    setting = Setting.VP

    def _coefficients(self, t):
        one = np.ones_like(t)
        zero = np.zeros_like(t)
        return 1.0 - t, t.copy(), -one, one, zero, zero

    def _lambda(self, t):
        return np.log1p(-t) - np.log(t)

    def _invert_closed(self, lam):
        return 1.0 / (1.0 + np.exp(lam))

    def lambda_interval(self):
        return (-math.inf, math.inf)

    def params(self):
        return {}


def tangent_schedule(gamma: float, eta1: float = math.inf) -> TangentLaw:
    """Parameterised tangent law with eta(1) = eta1 (inf for the VP boundary)."""
    return TangentLaw(gamma=float(gamma), eta1=float(eta1))


_ALIASES = {
    "vp_cosine": Family.VP_COSINE,
    "cosine": Family.VP_COSINE,
    "ve_geometric": Family.VE_GEOMETRIC,
    "ve": Family.VE_GEOMETRIC,
    "tangent": Family.TANGENT_LAW,
    "tangent_law": Family.TANGENT_LAW,
    "ddpm_linear": Family.DDPM_LINEAR,
    "ddpm": Family.DDPM_LINEAR,
    "flow_linear": Family.FLOW_LINEAR,
    "flow": Family.FLOW_LINEAR,
}

_CLASSES = {
    Family.VP_COSINE: VPCosine,
    Family.VE_GEOMETRIC: VEGeometric,
    Family.TANGENT_LAW: TangentLaw,
    Family.DDPM_LINEAR: DDPMLinear,
    Family.FLOW_LINEAR: FlowLinear,
}


def _number(key, val):
    if isinstance(val, str):
        low = val.strip().lower()
        if low in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(low)
        except ValueError:
            raise ConfigError(f"schedule parameter {key!r} is not a number: {val!r}") from None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"schedule parameter {key!r} is not a number: {val!r}")
    return float(val)


def schedule_from_spec(spec: Mapping[str, Any] | str) -> NoiseSchedule:
    """Build a schedule from ``{"family": name, **params}`` or a bare family name."""
    if isinstance(spec, str):
        spec = {"family": spec}
    spec = dict(spec)
    name = str(spec.pop("family", "")).lower()
    if name not in _ALIASES:
        raise ConfigError(f"unknown schedule family {name!r}; choose from {sorted(_ALIASES)}")
    cls = _CLASSES[_ALIASES[name]]
    if cls is TangentLaw and "gamma" not in spec:
        raise ConfigError("schedule family 'tangent' requires a 'gamma' parameter")
    params = {k: _number(k, v) for k, v in spec.items()}
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None
