"""Eigenvalue spectra of the Gaussian source covariance and the optimal tangent coefficient."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SpectrumError


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Positive eigenvalues mu_1 >= ... >= mu_k of the source covariance.

    Input order is not required; values are sorted descending on construction.
    """

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if mu.size == 0:
            raise SpectrumError("spectrum is empty")
        bad = np.flatnonzero(~np.isfinite(mu) | (mu <= 0.0))
        if bad.size:
            i = int(bad[0])
            raise SpectrumError(f"eigenvalue at mode {i} is not strictly positive: {float(mu[i])!r}", index=i)
        mu = np.sort(mu)[::-1].copy()
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def k(self) -> int:
        return int(self.mu.size)

    def __len__(self):
        return self.k

    def __eq__(self, other):
        return isinstance(other, Spectrum) and np.array_equal(self.mu, other.mu)

    def scaled(self, c: float) -> "Spectrum":
        return Spectrum(c * self.mu)

    def trace(self) -> float:
        return float(np.sum(self.mu))

    def inverse_trace(self) -> float:
        return float(np.sum(1.0 / self.mu))


@dataclass(frozen=True)
class PowerLawParams:
    k: int
    p: float = 1.5
    i0: float = 3.0
    mu_max: float = 5.0
    mu_min: float = 1e-3

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise SpectrumError(f"k must be a positive integer, got {self.k!r}")
        if self.p < 0:
            raise SpectrumError(f"decay exponent p must be >= 0, got {self.p!r}")
        if not self.i0 > 0:
            raise SpectrumError(f"head offset i0 must be > 0, got {self.i0!r}")
        if not self.mu_max > 0:
            raise SpectrumError(f"mu_max must be > 0, got {self.mu_max!r}")
        if self.mu_min < 0 or self.mu_min > self.mu_max:
            raise SpectrumError(f"mu_min must lie in [0, mu_max], got {self.mu_min!r}")
        if self.p > 0 and self.mu_max <= self.mu_min:
            raise SpectrumError("mu_max must exceed mu_min when p > 0")


def power_law_spectrum(params: PowerLawParams) -> Spectrum:
    """Shifted power law mu_l = C (l + i0)^(-p) + eps, l = 1..k.

    eps is the floor ``mu_min`` and C is calibrated so that mu_1 = mu_max.
    """
    eps = params.mu_min
    c = (params.mu_max - eps) * (1.0 + params.i0) ** params.p
    ell = np.arange(1, params.k + 1, dtype=float)
    mu = c * (ell + params.i0) ** (-params.p) + eps
    mu[0] = params.mu_max
    return Spectrum(mu)


def default_spectrum(k: int = 128) -> Spectrum:
    return power_law_spectrum(PowerLawParams(k=k))


def gamma_star(spectrum: Spectrum) -> float:
    """sqrt(tr(Sigma) / tr(Sigma^-1)), the minimiser of the global tangent-law objective."""
    return math.sqrt(spectrum.trace() / spectrum.inverse_trace())


def load_spectrum_csv(path: str | Path) -> Spectrum:
    """Read a one-column CSV with header ``mu``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["mu"]:
            raise SpectrumError(f"{path}: expected a single 'mu' header column, got {header!r}")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                raise SpectrumError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
    return Spectrum(np.array(values))


def save_spectrum_csv(spectrum: Spectrum, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("mu\n")
        for val in spectrum.mu:
            fh.write(f"{float(val)!r}\n")
