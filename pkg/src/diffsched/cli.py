"""Command-line experiment drivers.

Every command reads an optional JSON config (``--config``), applies flag
overrides of the same name, and writes CSV or JSON to ``--out`` (stdout by
default). Floats are written with ``repr`` so they round-trip exactly.

Exit codes: 0 success, 2 configuration error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import asymptotics as asy
from .discretize import default_lambda_bounds, export_steps, power_uniform_grid, power_uniform_path
from .errors import ConfigError, LambdaRangeError, SpectrumError
from .kl_engine import TimeGrid, exact_kl, kl_divergence, output_eigenvalues, reference_eigenvalues
from .oracle import MatrixModel, McConfig, kl_matrix_form, monte_carlo_covariance, propagate_covariance
from .schedule import (HALF_PI, DDPMLinear, FlowLinear, NoiseSchedule, VEGeometric, VPCosine,
                       schedule_from_spec, tangent_schedule)
from .spectrum import PowerLawParams, Spectrum, gamma_star, load_spectrum_csv, power_law_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
FORMAT_VERSION = 1

KL_SCAN_N = [4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128]
COMPARE_N = [8, 16, 32, 64, 128, 256, 512, 1024]
SWEEP_N = [64, 256, 1024]
RATE_N = [100, 200, 400, 800, 1600]

# per-command defaults; a config file or flag replaces any of them
DEFAULTS: dict[str, dict[str, Any]] = {
    "kl-scan": {"schedule": "vp_cosine", "N": KL_SCAN_N, "rho": [1.0, 1.5, 2.0], "k": 128},
    "schedule-compare": {"N": COMPARE_N, "k": 128},
    "gamma-sweep": {"N": SWEEP_N, "k": 128, "gamma": "auto", "gamma_points": 61},
    "rate-fit": {"schedule": "vp_cosine", "N": RATE_N, "k": 16, "series": "exact"},
    "steps-export": {"schedule": "vp_cosine", "N": [10], "rho": [1.0, 1.5, 2.0], "format": "json"},
    "verify": {"k": 8, "N": [64], "n_samples": 200_000, "batch": 50_000, "draws": 20,
               "oracle_tol": 1e-10},
}
COMMON = {"p": 1.5, "i0": 3.0, "mu_max": 5.0, "mu_min": 1e-3, "spectrum_csv": None, "mu": None,
          "lambda_t0": None, "lambda_tN": None, "format": "csv", "seed": 0, "threads": 1,
          "out": None}


# ---------------------------------------------------------------------------
# config handling


def _num_list(name: str, val, integer: bool = False) -> list:
    if isinstance(val, str):
        val = [v for v in val.split(",") if v.strip()]
    if not isinstance(val, (list, tuple)):
        val = [val]
    out = []
    for v in val:
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"field {name!r}: {v!r} is not a number") from None
        if integer:
            if x != int(x) or x < 1:
                raise ConfigError(f"field {name!r}: {v!r} is not a positive integer")
            x = int(x)
        out.append(x)
    if not out:
        raise ConfigError(f"field {name!r} must be nonempty")
    return out


def _float(name: str, val) -> float:
    try:
        return float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"field {name!r}: {val!r} is not a number") from None


def _int(name: str, val) -> int:
    try:
        x = float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"field {name!r}: {val!r} is not an integer") from None
    if x != int(x):
        raise ConfigError(f"field {name!r}: {val!r} is not an integer")
    return int(x)


def load_config(command: str, path: str | None, overrides: dict[str, Any]) -> dict[str, Any]:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config field(s) for {command}: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    cfg["N"] = _num_list("N", cfg["N"], integer=True)
    if "rho" in cfg:
        cfg["rho"] = _num_list("rho", cfg["rho"])
        if any(r < 1 for r in cfg["rho"]):
            raise ConfigError("field 'rho': every value must be >= 1")
    cfg["seed"] = _int("seed", cfg["seed"])
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("field 'seed' must be an unsigned 64-bit integer")
    cfg["threads"] = _int("threads", cfg["threads"])
    if cfg["threads"] < 1:
        raise ConfigError("field 'threads' must be >= 1")
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError(f"field 'format': expected 'csv' or 'json', got {cfg['format']!r}")
    return cfg


def spectrum_from_config(cfg: dict) -> Spectrum:
    if cfg.get("mu") is not None:
        vals = cfg["mu"]
        if isinstance(vals, str):
            vals = vals.split(",")
        return Spectrum(np.asarray([_float("mu", v) for v in vals]))
    if cfg.get("spectrum_csv"):
        try:
            return load_spectrum_csv(cfg["spectrum_csv"])
        except OSError as exc:
            raise ConfigError(f"field 'spectrum_csv': {exc}") from None
    try:
        params = PowerLawParams(k=_int("k", cfg["k"]), p=_float("p", cfg["p"]), i0=_float("i0", cfg["i0"]),
                                mu_max=_float("mu_max", cfg["mu_max"]),
                                mu_min=_float("mu_min", cfg["mu_min"]))
    except SpectrumError:
        raise
    except ValueError as exc:
        raise ConfigError(f"spectrum: {exc}") from None
    return power_law_spectrum(params)


def _schedule_from_config(val) -> NoiseSchedule:
    if isinstance(val, str) and val.lstrip().startswith("{"):
        try:
            val = json.loads(val)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"field 'schedule': invalid JSON: {exc}") from None
    return schedule_from_spec(val)


def _bounds(cfg, schedule):
    lo, hi = cfg.get("lambda_t0"), cfg.get("lambda_tN")
    if lo is None and hi is None:
        return None
    d0, dN = default_lambda_bounds(schedule)
    b0 = d0 if lo is None else _float("lambda_t0", lo)
    bN = dN if hi is None else _float("lambda_tN", hi)
    if not b0 > bN:
        raise ConfigError("fields 'lambda_t0' / 'lambda_tN': need lambda_t0 > lambda_tN")
    return b0, bN


def _pmap(fn: Callable, items: list, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.floating):
        return _json_safe(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def render_table(command: str, columns: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "json":
        doc = {"command": command, "version": FORMAT_VERSION, "columns": columns,
               "rows": [dict(zip(columns, r)) for r in rows]}
        return dumps_json(doc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# {command} v{FORMAT_VERSION}\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def dumps_json(doc) -> str:
    return json.dumps(_json_safe(doc), indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise ConfigError(f"field 'out': cannot write {out}: {exc}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_kl_scan(cfg: dict) -> tuple[str, int]:
    """Exact and leading-order KL on power-uniform grids for every (rho, N)."""
    schedule = _schedule_from_config(cfg["schedule"])
    spectrum = spectrum_from_config(cfg)
    bounds = _bounds(cfg, schedule)
    lam_t0, lam_tN = bounds if bounds is not None else default_lambda_bounds(schedule)
    cells = sorted((float(r), int(n)) for r in cfg["rho"] for n in cfg["N"])

    e1_cache: dict[float, float] = {}
    for rho in sorted(set(r for r, _ in cells)):
        lam, lam_dot = power_uniform_path(lam_t0, lam_tN, rho)
        e1 = np.array([asy.e1_lambda_path(lam, lam_dot, float(m)) for m in spectrum.mu])
        e1_cache[rho] = float(np.sum(e1 * e1))

    def run(cell):
        rho, n = cell
        try:
            grid, _ = power_uniform_grid(schedule, n, rho, (lam_t0, lam_tN))
        except LambdaRangeError as exc:
            raise ConfigError(f"lambda bounds: {exc}") from None
        return [rho, n, exact_kl(schedule, grid, spectrum), e1_cache[rho] / n ** 2]

    rows = _pmap(run, cells, cfg["threads"])
    return render_table("kl-scan", ["rho", "N", "kl_exact", "kl_predicted"], rows, cfg["format"]), EXIT_OK


def compared_schedules(spectrum: Spectrum) -> list[tuple[str, NoiseSchedule]]:
    return [
        ("tangent_gamma_star", tangent_schedule(gamma_star(spectrum))),
        ("vp_cosine", VPCosine()),
        ("ve_geometric", VEGeometric()),
        ("ddpm_linear", DDPMLinear()),
        ("flow_linear", FlowLinear()),
    ]


def cmd_schedule_compare(cfg: dict) -> tuple[str, int]:
    """KL on uniform t-grids for the tangent law at gamma* and the common schedules."""
    spectrum = spectrum_from_config(cfg)
    scheds = compared_schedules(spectrum)
    cells = [(name, sch, int(n)) for name, sch in scheds for n in sorted(cfg["N"])]
    rows = _pmap(lambda c: [c[0], c[2], exact_kl(c[1], TimeGrid.uniform(c[2]), spectrum)],
                 cells, cfg["threads"])
    return render_table("schedule-compare", ["schedule", "N", "kl"], rows, cfg["format"]), EXIT_OK


def sweep_gammas(cfg: dict, g_star: float) -> list[float]:
    g = cfg["gamma"]
    if g == "auto":
        n = _int("gamma_points", cfg["gamma_points"])
        if n < 2:
            raise ConfigError("field 'gamma_points' must be >= 2")
        return [float(v) for v in np.geomspace(g_star / 30.0, g_star * 30.0, n)]
    vals = _num_list("gamma", g)
    if any(v <= 0 for v in vals):
        raise ConfigError("field 'gamma': values must be positive")
    return sorted(vals)


def cmd_gamma_sweep(cfg: dict) -> tuple[str, int]:
    """Tangent-law KL over gamma at each N, with gamma* and the largest-N argmin appended."""
    spectrum = spectrum_from_config(cfg)
    g_star = gamma_star(spectrum)
    gammas = sweep_gammas(cfg, g_star)
    ns = sorted(int(n) for n in cfg["N"])
    cells = [(g, n) for g in gammas for n in ns]
    rows = _pmap(lambda c: ["data", c[0], c[1], exact_kl(tangent_schedule(c[0]), TimeGrid.uniform(c[1]), spectrum)],
                 cells, cfg["threads"])
    last = [r for r in rows if r[2] == ns[-1]]
    best = min(last, key=lambda r: r[3])
    rows.append(["gamma_star", g_star, "", ""])
    rows.append(["argmin", best[1], best[2], best[3]])
    return render_table("gamma-sweep", ["kind", "gamma", "N", "kl"], rows, cfg["format"]), EXIT_OK


def rate_fit(ns: list[int], kl: list[float]) -> dict:
    if len(ns) < 4:
        raise ConfigError("field 'N': rate fit needs at least 4 values")
    if any(not (v > 0 and math.isfinite(v)) for v in kl):
        raise ConfigError("rate fit is degenerate: a KL value is 0 or infinite")
    slope, intercept, r2 = asy.slope_loglog(ns, kl)
    return {"slope": slope, "intercept": intercept, "r_squared": r2}


def cmd_rate_fit(cfg: dict) -> tuple[str, int]:
    """Log-log least-squares slope of KL against N on uniform grids."""
    schedule = _schedule_from_config(cfg["schedule"])
    spectrum = spectrum_from_config(cfg)
    ns = sorted(int(n) for n in cfg["N"])
    if cfg["series"] == "exact":
        kl = _pmap(lambda n: exact_kl(schedule, TimeGrid.uniform(n), spectrum), ns, cfg["threads"])
    elif cfg["series"] == "predicted":
        kl = [float(v) for v in asy.predicted_kl(spectrum, schedule, np.asarray(ns))]
    else:
        raise ConfigError(f"field 'series': expected 'exact' or 'predicted', got {cfg['series']!r}")
    doc = rate_fit(ns, kl)
    doc.update({"series": cfg["series"], "N": ns, "kl": kl})
    return dumps_json(doc), EXIT_OK


def step_file_name(family: str, rho: float, n: int, fmt: str) -> str:
    return f"steps_{family}_rho{rho!r}_N{n}.{fmt}"


def cmd_steps_export(cfg: dict) -> tuple[str, int]:
    """One step table per (rho, N) in the ``--out`` directory; prints the file list."""
    schedule = _schedule_from_config(cfg["schedule"])
    bounds = _bounds(cfg, schedule)
    out_dir = Path(cfg["out"] or ".")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"field 'out': {exc}") from None
    written = []
    for rho in sorted(cfg["rho"]):
        for n in sorted(cfg["N"]):
            try:
                grid, seq = power_uniform_grid(schedule, n, rho, bounds)
            except (LambdaRangeError, ValueError) as exc:
                raise ConfigError(f"steps-export rho={rho!r} N={n}: {exc}") from None
            path = out_dir / step_file_name(schedule.family.value, rho, n, cfg["format"])
            try:
                export_steps(grid, seq, schedule, path, fmt=cfg["format"])
            except OSError as exc:
                raise ConfigError(f"field 'out': {exc}") from None
            written.append(str(path))
    return "".join(p + "\n" for p in written), EXIT_OK


# ---------------------------------------------------------------------------
# verification battery


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def _random_draw(rng: np.random.Generator):
    k = int(rng.integers(1, 17))
    n = int(rng.integers(1, 129))
    mu = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), size=k))
    fam = int(rng.integers(0, 3))
    if fam == 0:
        sch: NoiseSchedule = VPCosine()
    elif fam == 1:
        sch = VEGeometric()
    else:
        sch = tangent_schedule(float(np.exp(rng.uniform(np.log(0.05), np.log(20.0)))))
    # interior random grid with both endpoints kept
    inner = np.sort(rng.uniform(0.0, 1.0, size=n - 1))
    grid = TimeGrid(np.concatenate([[0.0], inner, [1.0]]))
    return Spectrum(mu), sch, grid, int(rng.integers(0, 2 ** 31))


def check_lemma1(draws: int, seed: int, tol: float = 1e-10) -> dict:
    rng = np.random.default_rng(seed)
    worst_eig = 0.0
    worst_kl = 0.0
    for _ in range(draws):
        sp, sch, grid, useed = _random_draw(rng)
        model = MatrixModel.from_spectrum(sp, useed)
        m = output_eigenvalues(sch, grid, sp)
        cov = propagate_covariance(model, sch, grid)
        ev = np.sort(np.linalg.eigvalsh(cov))[::-1]
        worst_eig = max(worst_eig, _rel(ev, np.sort(m)[::-1]))
        n = reference_eigenvalues(sch, grid.end, sp)
        kl_e = kl_divergence(m, n)
        kl_m = kl_matrix_form(cov, model.conjugate(n))
        if kl_e > 0:
            worst_kl = max(worst_kl, abs(kl_m - kl_e) / kl_e)
    return {"name": "lemma1_matrix_oracle", "draws": draws, "max_rel_eig": worst_eig,
            "max_rel_kl": worst_kl, "passed": bool(worst_eig <= tol and worst_kl <= 1e-9)}


def check_monte_carlo(spectrum: Spectrum, n_steps: int, cfg: McConfig, threads: int) -> tuple[dict, list]:
    sch = VPCosine()
    grid = TimeGrid.uniform(n_steps)
    model = MatrixModel.from_spectrum(spectrum, cfg.seed)
    m = output_eigenvalues(sch, grid, spectrum)
    prop = model.mode_variances(propagate_covariance(model, sch, grid))
    cov, se = monte_carlo_covariance(model, sch, grid, cfg, threads=threads)
    emp = model.mode_variances(cov)
    z = (emp - m) / se
    modes = [{"closed_form": float(a), "propagated": float(b), "empirical": float(c), "se": float(d),
              "z": float(e)} for a, b, c, d, e in zip(m, prop, emp, se, z)]
    return ({"name": "monte_carlo", "n_samples": cfg.n_samples, "N": n_steps,
             "max_abs_z": float(np.max(np.abs(z))), "passed": bool(np.all(np.abs(z) <= 5.0))}, modes)


def check_e1_closed(tol: float = 1e-8) -> dict:
    worst = 0.0
    vals = np.geomspace(1e-2, 1e2, 5)
    for g in vals:
        for mu in vals:
            q = asy.e1_quadrature(tangent_schedule(float(g)), float(mu))
            c = asy.e1_tangent_closed(float(g), float(mu), HALF_PI)
            worst = max(worst, abs(q - c) / abs(c))
    vp = asy.e1_tangent_closed(1.0, 1.0, HALF_PI)
    err_vp = abs(vp + math.pi ** 2 / 8) / (math.pi ** 2 / 8)
    return {"name": "e1_closed_vs_quadrature", "max_rel": worst, "vp_limit_rel": err_vp,
            "passed": bool(worst <= tol and err_vp <= 1e-12)}


def check_gamma_star(seed: int, n_spectra: int = 5, points: int = 2048) -> dict:
    rng = np.random.default_rng(seed)
    ok = True
    worst_cells = 0.0
    for _ in range(n_spectra):
        sp = Spectrum(np.exp(rng.uniform(np.log(1e-3), np.log(10.0), size=int(rng.integers(2, 129)))))
        g = gamma_star(sp)
        best, grid = asy.log_grid_argmin(lambda x: asy.objective_J_gamma(sp, x), g / 100.0, g * 100.0, points)
        cell = math.log(grid[1] / grid[0])
        cells = abs(math.log(best / g)) / cell
        worst_cells = max(worst_cells, cells)
        ok &= cells <= 1.0
        ok &= asy.fd_second_derivative(lambda x: asy.objective_J_gamma(sp, x), g) > 0
    return {"name": "gamma_star_argmin", "spectra": n_spectra, "max_offset_cells": worst_cells,
            "passed": bool(ok)}


def check_variational(seed: int, n_perturb: int = 10, tol: float = 1e-7) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(n_perturb):
        mu = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
        coeffs = rng.standard_normal(4) * 0.2 / np.arange(1, 5) ** 2 / math.sqrt(mu)
        traj, energy = asy.perturbed_tangent(mu, coeffs)
        j0 = asy.functional_J(asy.tangent_trajectory(mu), mu)
        j1 = asy.functional_J(traj, mu)
        ok &= j0 <= j1
        worst = max(worst, abs((j1 - j0) - energy))
    return {"name": "variational_perturbations", "perturbations": n_perturb, "max_abs_err": worst,
            "passed": bool(ok and worst <= tol)}


def cmd_verify(cfg: dict) -> tuple[str, int]:
    """Run the oracle battery; exit status 3 if any check fails."""
    seed = cfg["seed"]
    try:
        spectrum = spectrum_from_config(cfg)
    except SpectrumError as exc:
        doc = {"seed": seed, "passed": False,
               "precondition": {"error": str(exc), "mode_index": exc.index}}
        return dumps_json(doc), EXIT_VERIFY
    try:
        mc = McConfig(n_samples=_int("n_samples", cfg["n_samples"]), seed=seed,
                      batch=_int("batch", cfg["batch"]))
    except ValueError as exc:
        raise ConfigError(f"fields 'n_samples' / 'batch': {exc}") from None
    checks = [check_lemma1(_int("draws", cfg["draws"]), seed, _float("oracle_tol", cfg["oracle_tol"]))]
    mc_check, modes = check_monte_carlo(spectrum, int(cfg["N"][0]), mc, cfg["threads"])
    checks.append(mc_check)
    checks.append(check_e1_closed())
    checks.append(check_gamma_star(seed))
    checks.append(check_variational(seed))
    passed = all(c["passed"] for c in checks)
    doc = {"seed": seed, "passed": passed, "checks": checks, "modes": modes}
    return dumps_json(doc), EXIT_OK if passed else EXIT_VERIFY


COMMANDS = {
    "kl-scan": cmd_kl_scan,
    "schedule-compare": cmd_schedule_compare,
    "gamma-sweep": cmd_gamma_sweep,
    "rate-fit": cmd_rate_fit,
    "steps-export": cmd_steps_export,
    "verify": cmd_verify,
}

# config key -> flag help
FIELD_FLAGS = {
    "schedule": "schedule family name or JSON spec",
    "k": "power-law spectrum dimension",
    "p": "power-law exponent",
    "i0": "power-law index offset",
    "mu_max": "largest eigenvalue",
    "mu_min": "eigenvalue floor",
    "spectrum_csv": "read eigenvalues from a CSV with a 'mu' column",
    "mu": "comma-separated eigenvalues",
    "N": "comma-separated step counts",
    "rho": "comma-separated companding exponents",
    "gamma": "comma-separated gamma values or 'auto'",
    "gamma_points": "number of points in the auto gamma grid",
    "lambda_t0": "final (high-SNR) half-logSNR boundary",
    "lambda_tN": "starting (low-SNR) half-logSNR boundary",
    "format": "csv or json",
    "series": "rate-fit series: exact or predicted",
    "n_samples": "Monte-Carlo sample count",
    "batch": "Monte-Carlo batch size",
    "draws": "random draws for the matrix oracle check",
    "oracle_tol": "relative tolerance for the matrix oracle check",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output path (directory for steps-export)")
        sp.add_argument("--seed", help="unsigned 64-bit seed")
        sp.add_argument("--threads", help="worker threads")
        for key in sorted(set(DEFAULTS[name]) | set(COMMON)):
            if key in ("out", "seed", "threads") or key not in FIELD_FLAGS:
                continue
            flags = [f"--{key}"]
            if "_" in key:
                flags.append("--" + key.replace("_", "-"))
            sp.add_argument(*flags, dest=key, help=FIELD_FLAGS[key])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.command, args.config, overrides)
        text, code = COMMANDS[args.command](cfg)
        if args.command != "steps-export":
            _emit(text, cfg["out"])
        else:
            sys.stdout.write(text)
    except (ConfigError, SpectrumError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
