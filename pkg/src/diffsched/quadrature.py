"""Thin wrapper over QUADPACK adaptive Gauss-Kronrod quadrature."""

from __future__ import annotations

import warnings

from scipy import integrate

from .errors import QuadratureError

EPSABS = 1e-12
EPSREL = 1e-10
MAX_INTERVALS = 10_000


def integrate_adaptive(f, a: float, b: float, epsabs: float = EPSABS, epsrel: float = EPSREL,
                       limit: int = MAX_INTERVALS, points=None) -> float:
    """Integrate a scalar function on [a, b].

    Raises QuadratureError if the subdivision budget is exhausted or the
    integrand misbehaves. A round-off stall is accepted when
    the reported error is still within 1e3 times the requested tolerance.
    """
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit,
                             points=points, full_output=1)
    val, err = out[0], out[1]
    if len(out) > 3:
        msg = str(out[3])
        tol = max(epsabs, epsrel * abs(val))
        if "roundoff" in msg and err <= 1e3 * tol:
            return float(val)
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {msg} (err={err:.3g})")
    return float(val)
