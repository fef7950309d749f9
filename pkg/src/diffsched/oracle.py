"""Independent checks of the per-mode closed form.

Two routes that never diagonalise anything by hand:

* ``propagate_covariance`` pushes the full k x k covariance through the linear
  reverse map x <- (s_prev s I + a_prev a Sigma)(a^2 Sigma + s^2 I)^{-1} x.
* ``monte_carlo_covariance`` runs the DDIM recursion on samples, using the
  exact posterior mean E[x0 | x_t] = a Sigma (a^2 Sigma + s^2 I)^{-1} x_t.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kl_engine import TimeGrid
from .schedule import NoiseSchedule
from .spectrum import Spectrum


def random_orthogonal(k: int, seed: int) -> np.ndarray:
    """QR of a seeded Gaussian matrix with the signs of diag(R) folded into Q."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((k, k))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


@dataclass(frozen=True, eq=False)
class MatrixModel:
    U: np.ndarray
    mu: np.ndarray

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum, seed: int = 0) -> "MatrixModel":
        return cls(random_orthogonal(spectrum.k, seed), spectrum.mu.copy())

    @property
    def k(self) -> int:
        return int(self.mu.size)

    @property
    def sigma_x(self) -> np.ndarray:
        s = (self.U * self.mu) @ self.U.T
        return 0.5 * (s + s.T)

    def conjugate(self, diag: np.ndarray) -> np.ndarray:
        """U diag(d) U^T."""
        s = (self.U * np.asarray(diag)) @ self.U.T
        return 0.5 * (s + s.T)

    def mode_variances(self, cov: np.ndarray) -> np.ndarray:
        """u_l^T C u_l for each eigenvector u_l of Sigma_x."""
        return np.einsum("il,ij,jl->l", self.U, cov, self.U)


def _step_matrix(sigma_x, a_prev, s_prev, a, s):
    k = sigma_x.shape[0]
    eye = np.eye(k)
    c = a * a * sigma_x + s * s * eye
    b = s_prev * s * eye + a_prev * a * sigma_x
    # B C^{-1} = (C^{-1} B^T)^T with C SPD
    return linalg.cho_solve(linalg.cho_factor(c), b.T).T


def propagate_covariance(model: MatrixModel, schedule: NoiseSchedule, grid: TimeGrid) -> np.ndarray:
    """Covariance of the sampler output, starting from sigma_init^2 I."""
    a, s = schedule.alpha_sigma(grid.times)
    sig = schedule.prior_std(grid.start)
    sigma_x = model.sigma_x
    cov = sig * sig * np.eye(model.k)
    for j in range(grid.n_steps, 0, -1):
        A = _step_matrix(sigma_x, a[j - 1], s[j - 1], a[j], s[j])
        cov = A @ cov @ A.T
        cov = 0.5 * (cov + cov.T)
    return cov


def propagated_eigenvalues(model: MatrixModel, schedule: NoiseSchedule, grid: TimeGrid) -> np.ndarray:
    """Eigenvalues of the propagated covariance, descending."""
    return np.sort(linalg.eigvalsh(propagate_covariance(model, schedule, grid)))[::-1]


MIN_SAMPLES = 1000


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 200_000
    seed: int = 0
    batch: int = 50_000

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be positive")
        if self.n_samples < MIN_SAMPLES:
            raise ValueError(f"n_samples must be at least {MIN_SAMPLES} for covariance estimates")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _pairwise_sum(items):
    items = list(items)
    while len(items) > 1:
        nxt = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def _ddim_batch(x, sigma_x, a, s):
    """Run x_{t_N} -> x_{t_0} in place of a fresh array."""
    n_steps = a.size - 1
    k = sigma_x.shape[0]
    eye = np.eye(k)
    for j in range(n_steps, 0, -1):
        aj, sj, ap, sp = a[j], s[j], a[j - 1], s[j - 1]
        c = aj * aj * sigma_x + sj * sj * eye
        # rows: E[x0|x] = aj * x C^{-1} Sigma (both symmetric and commuting)
        w = linalg.cho_solve(linalg.cho_factor(c), sigma_x)
        x0 = aj * (x @ w)
        if aj > 0:
            eps = (x - aj * x0) / sj
            x = (ap / aj) * x + (sp - ap / aj * sj) * eps
        else:
            # alpha_{t_j} = 0: the noise-prediction form divides by zero;
            # use the equivalent data-prediction form of the same update
            x = (sp / sj) * x + (ap - sp / sj * aj) * x0
    return x


def monte_carlo_covariance(model: MatrixModel, schedule: NoiseSchedule, grid: TimeGrid,
                           cfg: McConfig, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Empirical output covariance (known zero mean) and per-mode standard errors.

    Batches draw from independent SeedSequence children of ``cfg.seed``, and
    the per-batch scatter matrices are combined by a fixed pairwise tree, so
    the result does not depend on ``threads``.
    """
    a, s = schedule.alpha_sigma(grid.times)
    a = np.asarray(a, dtype=float)
    s = np.asarray(s, dtype=float)
    sig = schedule.prior_std(grid.start)
    sigma_x = model.sigma_x
    sizes = [cfg.batch] * (cfg.n_samples // cfg.batch)
    if cfg.n_samples % cfg.batch:
        sizes.append(cfg.n_samples % cfg.batch)
    children = np.random.SeedSequence(cfg.seed).spawn(len(sizes))

    def run(idx):
        rng = np.random.Generator(np.random.PCG64(children[idx]))
        x = sig * rng.standard_normal((sizes[idx], model.k))
        y = _ddim_batch(x, sigma_x, a, s)
        return y.T @ y

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scatters = list(pool.map(run, range(len(sizes))))
    else:
        scatters = [run(i) for i in range(len(sizes))]
    cov = _pairwise_sum(scatters) / cfg.n_samples
    cov = 0.5 * (cov + cov.T)
    se = standard_error(model.mode_variances(cov), cfg.n_samples)
    return cov, se


def standard_error(variances, n_samples: int) -> np.ndarray:
    """Gaussian approximation sd(var_hat) = var * sqrt(2 / n)."""
    return np.asarray(variances, dtype=float) * math.sqrt(2.0 / n_samples)


def kl_matrix_form(p_cov, q_cov) -> float:
    """0.5 (tr(Q^-1 P) - log det(Q^-1 P) - k) for zero-mean Gaussians."""
    p = np.asarray(p_cov, dtype=float)
    q = np.asarray(q_cov, dtype=float)
    if p.shape != q.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("covariances must be square and of equal shape")
    k = p.shape[0]
    try:
        cq = linalg.cho_factor(q)
    except linalg.LinAlgError:
        raise ValueError("reference covariance is not symmetric positive definite") from None
    tr = float(np.trace(linalg.cho_solve(cq, p)))
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(cq[0]))))
    try:
        cp = linalg.cho_factor(p)
    except linalg.LinAlgError:
        ev = linalg.eigvalsh(p)
        if np.min(ev) <= 0:
            return math.inf
        logdet_p = float(np.sum(np.log(ev)))
    else:
        logdet_p = 2.0 * float(np.sum(np.log(np.diag(cp[0]))))
    return 0.5 * (tr - (logdet_p - logdet_q) - k)
