"""Power-uniform half-logSNR step rules and sampler-ready step tables.

Index conventions differ on the two sides and are kept as they are:

* ``LambdaSequence.lambdas[i]`` runs from the sampling start (i = 0, lowest
  SNR) to the end (i = N, highest SNR), so it is increasing.
* ``TimeGrid.times[j]`` runs from the final time t_0 to the start t_N, also
  increasing. ``grid_from_lambdas`` therefore reverses the order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import LambdaRangeError
from .kl_engine import TimeGrid
from .schedule import NoiseSchedule, Setting

STEP_TABLE_VERSION = 1
DEFAULT_T_LO = 1e-3
DEFAULT_T_HI = 1.0 - 1e-3


def signed_power(x, e: float):
    """sign(x) |x|^e, odd and strictly increasing for e > 0."""
    if not e > 0:
        raise ValueError("exponent must be positive")
    arr = np.asarray(x, dtype=float)
    out = np.sign(arr) * np.abs(arr) ** e
    return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LambdaSequence:
    lambdas: np.ndarray
    rho: float

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).reshape(-1).copy()
        if lam.size < 2:
            raise ValueError("need at least two lambda values")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("lambda sequence must be strictly increasing")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def n_steps(self) -> int:
        return self.lambdas.size - 1


def power_uniform(lambda_t0: float, lambda_tN: float, n: int, rho: float) -> LambdaSequence:
    """lambda_i = (lambda_tN^(1/rho) + (i/N)(lambda_t0^(1/rho) - lambda_tN^(1/rho)))^rho, signed powers.

    lambda_t0 is the final (high-SNR) boundary and lambda_tN the starting
    (low-SNR) one. Endpoints are reproduced exactly; rho = 1 is the
    uniform-lambda rule.
    """
    if not lambda_t0 > lambda_tN:
        raise ValueError(f"need lambda_t0 > lambda_tN, got {lambda_t0} <= {lambda_tN}")
    if int(n) != n or n < 1:
        raise ValueError("N must be a positive integer")
    if not rho >= 1:
        raise ValueError("rho must be >= 1")
    n = int(n)
    lo = float(lambda_tN)
    hi = float(lambda_t0)
    if rho == 1:
        a, b = lo, hi
    else:
        a, b = signed_power(lo, 1.0 / rho), signed_power(hi, 1.0 / rho)
    frac = np.arange(n + 1, dtype=float) / n
    x = a + frac * (b - a)
    lam = x if rho == 1 else signed_power(x, rho)
    lam = np.asarray(lam, dtype=float)
    lam[0] = lo
    lam[-1] = hi
    return LambdaSequence(lam, float(rho))


def power_uniform_path(lambda_t0: float, lambda_tN: float, rho: float):
    """Continuous version lambda(u), u in [0, 1], and its derivative."""
    a = signed_power(float(lambda_tN), 1.0 / rho)
    b = signed_power(float(lambda_t0), 1.0 / rho)

    def lam(u):
        return signed_power(a + u * (b - a), rho)

    def lam_dot(u):
        x = a + u * (b - a)
        return rho * abs(x) ** (rho - 1.0) * (b - a)

    return lam, lam_dot


def default_lambda_bounds(schedule: NoiseSchedule) -> tuple[float, float]:
    """(lambda_t0, lambda_tN) defaults: VP families use t in [1e-3, 1 - 1e-3].

    VE families use the endpoints of [0, 1] when lambda is finite there and the
    same 1e-3 clamp otherwise.
    """
    if schedule.setting is Setting.VP:
        t_lo, t_hi = DEFAULT_T_LO, DEFAULT_T_HI
    else:
        a0, s0 = schedule.alpha_sigma(0.0)
        a1, s1 = schedule.alpha_sigma(1.0)
        t_lo = 0.0 if (a0 > 0 and s0 > 0) else DEFAULT_T_LO
        t_hi = 1.0 if (a1 > 0 and s1 > 0) else DEFAULT_T_HI
    return float(schedule.half_logsnr(t_lo)), float(schedule.half_logsnr(t_hi))


def grid_from_lambdas(schedule: NoiseSchedule, seq: LambdaSequence) -> TimeGrid:
    """Map lambda_i to t_i = lambda^{-1}(lambda_i) and return the grid in t-index order."""
    try:
        t_sampler = np.asarray(schedule.invert_lambda(seq.lambdas), dtype=float)
    except LambdaRangeError as exc:
        i = exc.index
        raise LambdaRangeError(f"lambda index {i}: {exc}", index=i) from None
    if np.any(np.diff(t_sampler) >= 0):
        raise ValueError("mapped times are not strictly decreasing; lambda spacing below time resolution")
    return TimeGrid.from_sampler_order(t_sampler)


def power_uniform_grid(schedule: NoiseSchedule, n: int, rho: float,
                       bounds: tuple[float, float] | None = None) -> tuple[TimeGrid, LambdaSequence]:
    lam_t0, lam_tN = bounds if bounds is not None else default_lambda_bounds(schedule)
    seq = power_uniform(lam_t0, lam_tN, n, rho)
    return grid_from_lambdas(schedule, seq), seq


# ---------------------------------------------------------------------------
# step tables


def _schedule_meta(meta: Any) -> dict:
    if isinstance(meta, NoiseSchedule):
        spec = meta.to_spec()
    else:
        spec = dict(meta)
    family = spec.pop("family")
    return {"family": family, "params": {k: spec[k] for k in sorted(spec)}}


def step_table(grid: TimeGrid, seq: LambdaSequence, meta: NoiseSchedule | Mapping) -> dict:
    if grid.times.size != seq.lambdas.size:
        raise ValueError(f"grid has {grid.times.size} points but lambda sequence has {seq.lambdas.size}")
    return {
        "schedule": _schedule_meta(meta),
        "rho": float(seq.rho),
        "nfe": int(seq.n_steps),
        "timesteps": [float(t) for t in grid.sampler_order()],
        "lambdas": [float(v) for v in seq.lambdas],
        "generator": "power-uniform",
        "version": STEP_TABLE_VERSION,
    }


def dumps_step_table(table: Mapping) -> str:
    # json uses repr() for floats, which round-trips exactly
    return json.dumps(table, indent=2, allow_nan=False) + "\n"


def step_table_csv(table: Mapping) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "t_i", "lambda_i"])
    for i, (t, lam) in enumerate(zip(table["timesteps"], table["lambdas"])):
        w.writerow([i, repr(float(t)), repr(float(lam))])
    return buf.getvalue()


def export_steps(grid: TimeGrid, seq: LambdaSequence, meta: NoiseSchedule | Mapping,
                 path: str | Path | None = None, fmt: str = "json") -> str:
    """Render (and optionally write) a step table. Returns the document text."""
    table = step_table(grid, seq, meta)
    if fmt == "json":
        text = dumps_step_table(table)
    elif fmt == "csv":
        text = step_table_csv(table)
    else:
        raise ValueError(f"unknown step-table format {fmt!r}")
    if path is not None:
        path = Path(path)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write step table to {path}: {exc}") from exc
    return text


def load_step_table(source: str | Path) -> tuple[TimeGrid, LambdaSequence, dict]:
    """Inverse of ``export_steps`` for the JSON format. Accepts a path or the JSON text."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    doc = json.loads(text)
    if doc.get("version") != STEP_TABLE_VERSION:
        raise ValueError(f"unsupported step-table version {doc.get('version')!r}")
    grid = TimeGrid.from_sampler_order(doc["timesteps"])
    seq = LambdaSequence(np.asarray(doc["lambdas"], dtype=float), float(doc["rho"]))
    if grid.n_steps != doc["nfe"]:
        raise ValueError("nfe does not match the number of timesteps")
    return grid, seq, doc
