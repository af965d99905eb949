"""Experiment orchestration: studies, result tables, and emission.

Each study takes an ExperimentConfig and returns a StudyResult holding
per-cell rows, an optional log-log slope with its standard error, the
pass verdict against the stated tolerance band, and the resolved
configuration for provenance.  write_study() lays a result out as one
directory with result.json plus one CSV per recorded series.

Workers only ever receive immutable task tuples and return plain
values; merges happen in the orchestrating process in task order, so
outputs do not depend on scheduling.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
from dataclasses import dataclass
from importlib import metadata as _importlib_metadata
from pathlib import Path

import numpy as np

from .bloch_solver import (
    BlochTrajectory,
    conservation_diagnostics,
    integrate_bloch,
)
from .config import ConfigError, ExperimentConfig
from .diophantine import (
    DiophParams,
    check_dioph,
    check_speed,
    genericity_experiment,
    perturbed_threshold,
    perturbed_violations,
)
from .model import Scaling, well_prepared_state
from .rate_solver import _expm_trajectory, solve_layered, timelayer_analysis
from .rates import (
    average_oracle,
    b_limit,
    psi_averaged,
    psi_dominant,
    regime_classify,
    resonance_set,
    split_AB,
    w_mod,
)
from .sharp_ops import (
    equilibrium_state,
    sharpen,
    stable_blocks,
    thermodynamic_equilibrium,
)

__all__ = [
    "StudyResult",
    "fit_loglog",
    "run_convergence_study",
    "run_averaging_oracle",
    "run_timelayer_study",
    "run_equilibrium_study",
    "run_dioph_suite",
    "run_bloch_simulation",
    "run_rate_simulation",
    "run_rate_tables",
    "write_study",
]

_CHANNELS = ("coherence", "d_vs_rhod1", "d_vs_rhod2")


def _metadata() -> dict:
    try:
        version = _importlib_metadata.version("blochrate")
    except _importlib_metadata.PackageNotFoundError:
        version = "unknown"
    return {"package": "blochrate", "version": version, "numpy": np.__version__}


@dataclass(frozen=True)
class StudyResult:
    """Summary of one study run.

    rows carries one dict per cell (eps point, S value, regime, ...);
    series maps a CSV stem to (header, rows of numbers).  The slope is
    reported only when at least three positive points were fit.
    """

    name: str
    passed: bool
    rows: tuple[dict, ...]
    slope: float | None
    slope_stderr: float | None
    expected_slope: float | None
    slope_tolerance: float | None
    notes: tuple[str, ...]
    config: dict
    metadata: dict
    series: dict

    def to_json(self) -> dict:
        return _json_safe(
            {
                "name": self.name,
                "passed": self.passed,
                "rows": list(self.rows),
                "slope": self.slope,
                "slope_stderr": self.slope_stderr,
                "expected_slope": self.expected_slope,
                "slope_tolerance": self.slope_tolerance,
                "notes": list(self.notes),
                "config": self.config,
                "metadata": self.metadata,
            }
        )


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return value


def fit_loglog(x, y) -> tuple[float | None, float | None]:
    """Least-squares slope of log y against log x, with standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.any(x <= 0.0) or np.any(y <= 0.0):
        return None, None
    coef, cov = np.polyfit(np.log(x), np.log(y), 1, cov=True)
    return float(coef[0]), float(math.sqrt(max(float(cov[0][0]), 0.0)))


def _pmap(fn, tasks, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=int(jobs)) as ex:
        return list(ex.map(fn, tasks))


def _require(cfg: ExperimentConfig, *, system: bool = False, field: bool = False) -> None:
    if system and cfg.system is None:
        raise ConfigError("this study needs a [system] section")
    if field and cfg.field is None:
        raise ConfigError("this study needs a [field] section (or a preset with a wave)")


def _rate_populations(table: np.ndarray, rho0: np.ndarray, times: np.ndarray) -> np.ndarray:
    return _expm_trajectory(sharpen(table).matrix, np.asarray(rho0, dtype=float), times)


def _monotone_fallback(eps: tuple, errs: list, expected: float) -> tuple[bool, str]:
    """Noisy-fit fallback: strict decrease plus a band on the endpoint ratio."""
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    if not decreasing or errs[-1] <= 0.0:
        return False, "fallback failed: errors not strictly decreasing"
    observed = errs[0] / errs[-1]
    predicted = (eps[0] / eps[-1]) ** expected
    ok = 0.5 * predicted <= observed <= 1.5 * predicted
    return ok, (
        f"fallback endpoint ratio {observed:.3g} vs predicted {predicted:.3g} "
        f"({'inside' if ok else 'outside'} [0.5, 1.5] band)"
    )


# --- convergence ------------------------------------------------------------


def _convergence_cell(task):
    sys_, field, scaling, rho0, solver, channel = task
    traj = integrate_bloch(sys_, field, scaling, well_prepared_state(rho0), solver)
    if channel == "coherence":
        err = float(traj.coherence_l1.max())
    else:
        if channel == "d_vs_rhod1":
            table = psi_averaged(sys_, field, scaling) + sys_.W
        else:
            res = resonance_set(sys_, field)
            table = w_mod(sys_, psi_dominant(sys_, field, scaling, res))
        approx = _rate_populations(table, rho0, traj.times)
        err = float(np.linalg.norm(traj.populations() - approx, axis=1).max())
    return float(scaling.eps), err


def run_convergence_study(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Bloch-vs-approximation error across the eps grid, with a slope fit.

    Channels: 'coherence' (sup-t l1 of the off-diagonal, expected order
    1-mu), 'd_vs_rhod1' (populations against the averaged-rate solution,
    order 1-2mu), 'd_vs_rhod2' (against the dominant-rate solution,
    order min(mu, 1-2mu)).
    """
    _require(cfg, system=True, field=True)
    channel = cfg.study.get("channel", "coherence")
    if channel not in _CHANNELS:
        raise ConfigError(f"channel must be one of {_CHANNELS}, got {channel!r}")
    if len(cfg.eps) < 3:
        raise ConfigError(f"need at least 3 eps points for a slope, got {len(cfg.eps)}")

    rho0 = cfg.initial_populations()
    tasks = [
        (cfg.system, cfg.field, Scaling(e, cfg.mu, cfg.p), rho0, cfg.solver, channel)
        for e in cfg.eps
    ]
    cells = _pmap(_convergence_cell, tasks, jobs)

    expected = {
        "coherence": 1.0 - cfg.mu,
        "d_vs_rhod1": 1.0 - 2.0 * cfg.mu,
        "d_vs_rhod2": min(cfg.mu, 1.0 - 2.0 * cfg.mu),
    }[channel]
    tol = float(cfg.study.get("slope_tolerance", 0.15 if channel == "coherence" else 0.2))

    errs = [err for _, err in cells]
    notes = []
    if all(e == 0.0 for e in errs):
        slope = stderr = None
        passed = True
        notes.append("error identically zero on the whole grid")
    else:
        slope, stderr = fit_loglog(cfg.eps, errs)
        if slope is not None and abs(slope - expected) <= tol:
            passed = True
            notes.append(f"slope {slope:.4f} within {tol} of {expected}")
        else:
            if slope is not None:
                notes.append(f"slope {slope:.4f} outside {expected} +/- {tol}")
            passed, why = _monotone_fallback(cfg.eps, errs, expected)
            notes.append(why)

    rows = tuple({"eps": e, "error": err, "channel": channel} for e, err in cells)
    return StudyResult(
        name=f"converge[{channel}]",
        passed=passed,
        rows=rows,
        slope=slope,
        slope_stderr=stderr,
        expected_slope=expected,
        slope_tolerance=tol,
        notes=tuple(notes),
        config=cfg.resolved,
        metadata=_metadata(),
        series={"errors": (("eps", "error"), [(e, err) for e, err in cells])},
    )


# --- averaging oracle -------------------------------------------------------


def _oracle_cell(task):
    sys_, field, scaling, S, quad_steps = task
    ref = psi_averaged(sys_, field, scaling)
    avg = average_oracle(sys_, field, scaling, S, quad_steps)
    denom = np.where(np.abs(ref) > 0.0, np.abs(ref), 1.0)
    rel = float((np.abs(avg - ref) / denom).max())
    return float(scaling.eps), int(S), rel


def run_averaging_oracle(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Finite-horizon Cesaro averages against the closed form, over an S grid."""
    _require(cfg, system=True, field=True)
    s_grid = [int(s) for s in cfg.study.get("s_grid", (250, 500, 1000, 2000))]
    if sorted(s_grid) != s_grid or len(set(s_grid)) != len(s_grid):
        raise ConfigError(f"s_grid must be strictly increasing, got {s_grid}")
    per_unit = int(cfg.study.get("quad_points_per_unit", 32))
    final_rtol = float(cfg.study.get("final_rtol", 0.01))
    tol = float(cfg.study.get("slope_tolerance", 0.3))

    tasks = [
        (cfg.system, cfg.field, Scaling(e, cfg.mu, cfg.p), S, per_unit * S)
        for e in cfg.eps
        for S in s_grid
    ]
    cells = _pmap(_oracle_cell, tasks, jobs)

    notes = []
    passed = True
    slope = stderr = None
    for e in cfg.eps:
        sub = [(S, rel) for ee, S, rel in cells if ee == float(e)]
        finals = sub[-1][1]
        residuals = [rel for _, rel in sub]
        if all(r == 0.0 for r in residuals):
            notes.append(f"eps={e}: residuals identically zero")
            continue
        if finals > final_rtol:
            passed = False
            notes.append(f"eps={e}: final residual {finals:.3e} above {final_rtol}")
        slope, stderr = fit_loglog([s for s, _ in sub], residuals)
        if slope is None or abs(slope - (-1.0)) > tol:
            passed = False
            notes.append(f"eps={e}: residual-vs-S slope {slope} outside -1 +/- {tol}")
        else:
            notes.append(f"eps={e}: slope {slope:.3f}, final residual {finals:.3e}")
    rows = tuple({"eps": e, "S": S, "residual": rel} for e, S, rel in cells)
    return StudyResult(
        name="average-oracle",
        passed=passed,
        rows=rows,
        slope=slope,
        slope_stderr=stderr,
        expected_slope=-1.0,
        slope_tolerance=tol,
        notes=tuple(notes),
        config=cfg.resolved,
        metadata=_metadata(),
        series={"residuals": (("eps", "S", "residual"), [tuple(c) for c in cells])},
    )


# --- time layer -------------------------------------------------------------


def _layer_cell(task):
    sys_, field, mu, p, eps, rho0, T = task
    scaling = Scaling(eps, mu, p)
    run = solve_layered(sys_, field, scaling, rho0, T)
    fit = timelayer_analysis(run.full, run.proj, scaling, run.regime, c=run.c)
    return {
        "mu": mu,
        "p": p,
        "ratio": run.regime.ratio,
        "sigma": run.regime.sigma,
        "eps": eps,
        "rate": fit.rate,
        "plateau": fit.plateau,
        "kernel_error_sup": float(run.kernel_error.max()),
        "c": run.c,
    }


def _layer_regimes(cfg: ExperimentConfig) -> list[tuple[float, float, np.ndarray]]:
    """Normalize the regimes entry: [mu, p] pairs or tables with a rho0.

    Polarizing the initial datum per regime isolates the mode whose
    decay the regime's layer exponent describes; rows without a rho0
    fall back to the study-wide initial populations.
    """
    default_rho0 = cfg.initial_populations()
    out = []
    for entry in cfg.study.get(
        "regimes", [[0.4, 0.8], [0.4, 0.4], [0.45, 0.3], [0.45, 0.15]]
    ):
        if isinstance(entry, dict):
            rho0 = np.asarray(entry.get("rho0", default_rho0), dtype=float)
            out.append((float(entry["mu"]), float(entry["p"]), rho0))
        else:
            mu, p = entry
            out.append((float(mu), float(p), default_rho0))
    return out


def run_timelayer_study(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Layer decay-rate and plateau scalings across (mu, p) regimes."""
    _require(cfg, system=True, field=True)
    if len(cfg.eps) < 3:
        raise ConfigError(f"need at least 3 eps points for a slope, got {len(cfg.eps)}")
    regimes = _layer_regimes(cfg)
    tol = float(cfg.study.get("slope_tolerance", 0.2))
    T = cfg.rate["t_final"]

    tasks = [
        (cfg.system, cfg.field, mu, p, float(e), rho0, T)
        for mu, p, rho0 in regimes
        for e in cfg.eps
    ]
    rows = _pmap(_layer_cell, tasks, jobs)

    notes = []
    passed = True
    for mu, p, _ in regimes:
        sub = [r for r in rows if r["mu"] == float(mu) and r["p"] == float(p)]
        sigma = sub[0]["sigma"]
        rates = [r["rate"] for r in sub]
        plateaus = [r["plateau"] for r in sub]
        if any(r is None for r in rates):
            passed = False
            notes.append(f"mu/p={mu}/{p}: some runs found no layer")
            continue
        rate_slope, _ = fit_loglog(cfg.eps, rates)
        plat_slope, _ = fit_loglog(cfg.eps, plateaus)
        ok_rate = rate_slope is not None and abs(rate_slope - (-sigma)) <= tol
        ok_plat = plat_slope is not None and abs(plat_slope - sigma) <= tol
        if not (ok_rate and ok_plat):
            passed = False
        notes.append(
            f"mu/p={mu}/{p} (sigma={sigma}): rate slope {rate_slope}, "
            f"plateau slope {plat_slope}, tol {tol}"
        )
    return StudyResult(
        name="timelayer",
        passed=passed,
        rows=tuple(rows),
        slope=None,
        slope_stderr=None,
        expected_slope=None,
        slope_tolerance=tol,
        notes=tuple(notes),
        config=cfg.resolved,
        metadata=_metadata(),
        series={
            "layers": (
                ("mu", "p", "eps", "rate", "plateau", "kernel_error_sup"),
                [
                    (
                        r["mu"],
                        r["p"],
                        r["eps"],
                        float("nan") if r["rate"] is None else r["rate"],
                        r["plateau"],
                        r["kernel_error_sup"],
                    )
                    for r in rows
                ],
            )
        },
    )


# --- equilibrium ------------------------------------------------------------


def run_equilibrium_study(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Relaxation of the bare rates towards the blockwise equilibrium."""
    _require(cfg, system=True)
    sys_ = cfg.system
    t_large = float(cfg.study.get("t_large", 50.0))
    steps = int(cfg.study.get("steps", 200))
    tol = float(cfg.study.get("tolerance", 1e-6))
    rho0 = cfg.initial_populations()

    M = sharpen(sys_.W).matrix
    times = np.linspace(0.0, t_large, steps + 1)
    pops = _expm_trajectory(M, rho0, times)
    target = equilibrium_state(sys_.W, rho0)
    endpoint_err = float(np.abs(pops[-1] - target).max())

    notes = [f"endpoint distance to equilibrium {endpoint_err:.3e} (tol {tol})"]
    passed = endpoint_err <= tol

    blocks = stable_blocks(sys_.W)
    block_drift = 0.0
    for block in blocks:
        idx = list(block)
        drift = float(np.abs(pops[:, idx].sum(axis=1) - rho0[idx].sum()).max())
        block_drift = max(block_drift, drift)
    notes.append(f"max blockwise mass drift {block_drift:.3e}")
    passed = passed and block_drift <= 1e-10

    untouched = [
        i
        for i in range(sys_.n_levels)
        if not np.any(sys_.W[i, :]) and not np.any(sys_.W[:, i])
    ]
    if untouched:
        dev = float(np.abs(pops[:, untouched] - rho0[untouched]).max())
        notes.append(f"decoupled levels {untouched} max deviation {dev:.3e}")
        passed = passed and dev <= 1e-12

    if sys_.temperature is not None:
        gibbs = thermodynamic_equilibrium(sys_.omega, sys_.temperature)
        gibbs_err = float(np.abs(target - gibbs * rho0.sum()).max())
        notes.append(f"Gibbs distance {gibbs_err:.3e}")
        passed = passed and gibbs_err <= 1e-10

    rows = tuple(
        {"level": i, "initial": float(rho0[i]), "final": float(pops[-1, i]), "target": float(target[i])}
        for i in range(sys_.n_levels)
    )
    header = ("t",) + tuple(f"pop_{i + 1}" for i in range(sys_.n_levels))
    series_rows = [(float(t),) + tuple(float(x) for x in pops[i]) for i, t in enumerate(times)]
    return StudyResult(
        name="equilibrium",
        passed=passed,
        rows=rows,
        slope=None,
        slope_stderr=None,
        expected_slope=None,
        slope_tolerance=None,
        notes=tuple(notes),
        config=cfg.resolved,
        metadata=_metadata(),
        series={"relaxation": (header, series_rows)},
    )


# --- Diophantine suite ------------------------------------------------------


def run_dioph_suite(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Small-divisor margins, perturbed scans over eps, and genericity."""
    _require(cfg, system=True, field=True)
    sys_, field = cfg.system, cfg.field
    d = cfg.dioph
    params = DiophParams(
        eta=float(d.get("eta", 0.1)),
        C_eta=d.get("c_eta"),
        B_max=d.get("b_max"),
    )

    combined = check_dioph(sys_, field, params)
    speed = check_speed(sys_, params)
    notes = [
        f"combined margin {combined.margin_combined:.6g} "
        f"({combined.n_scanned} scanned, {combined.n_resonant_excluded} resonant excluded)",
        f"pure margin {combined.margin_pure:.6g}",
        f"speed margin {speed.margin:.6g}" + (f" ({speed.note})" if speed.note else ""),
    ]
    passed = combined.margin_combined > 0.0 and combined.margin_pure > 0.0 and speed.margin > 0.0

    threshold = perturbed_threshold(sys_, field, Scaling(cfg.eps[0], cfg.mu, cfg.p), params)
    counts = []
    for e in cfg.eps:
        viols = perturbed_violations(sys_, field, Scaling(e, cfg.mu, cfg.p), params)
        counts.append((float(e), len(viols), viols))
    notes.append(f"perturbed-scan eps threshold {threshold:.6g}")
    if any(b > a for (_, a, _), (_, b, _) in zip(counts, counts[1:])):
        passed = False
        notes.append("violation counts increase as eps decreases")
    for e, n_v, _ in counts:
        if e < threshold and n_v != 0:
            passed = False
            notes.append(f"eps={e} below threshold but {n_v} violations found")

    gen_cfg = {
        "r": int(d.get("r", 2)),
        "ball_radius": float(d.get("ball_radius", 2.0)),
        "n_samples": int(d.get("n_samples", 10000)),
        "b_max": int(d.get("genericity_b_max", 8)),
    }
    omegas = d.get("levels", [float(x) for x in np.asarray(sys_.omega)])
    c_grid = d.get("c_grid", [float(c) for c in np.geomspace(1e-4, 1e-2, 9)])
    table = genericity_experiment(
        gen_cfg["r"],
        gen_cfg["ball_radius"],
        params.eta,
        omegas,
        gen_cfg["n_samples"],
        c_grid,
        int(seed),
        gen_cfg["b_max"],
    )
    fractions = table.fractions
    if any(b < a for a, b in zip(fractions, fractions[1:])):
        passed = False
        notes.append("genericity fractions not monotone in c")
    notes.append(
        f"genericity fractions {min(fractions):.4g}..{max(fractions):.4g} "
        f"over c in [{min(table.c_values):.3g}, {max(table.c_values):.3g}]"
    )

    rows = (
        {
            "part": "margins",
            "combined": combined.margin_combined,
            "pure": combined.margin_pure,
            "speed": speed.margin,
            "witness_combined": combined.witness_combined,
            "witness_pure": combined.witness_pure,
        },
        {"part": "perturbed", "threshold": threshold,
         "counts": [(e, n) for e, n, _ in counts],
         "violations": {str(e): v for e, _, v in counts}},
        {"part": "genericity", **gen_cfg,
         "c_values": list(table.c_values), "fractions": list(fractions)},
    )
    return StudyResult(
        name="dioph",
        passed=passed,
        rows=rows,
        slope=None,
        slope_stderr=None,
        expected_slope=None,
        slope_tolerance=None,
        notes=tuple(notes),
        config=cfg.resolved,
        metadata=_metadata(),
        series={
            "perturbed": (("eps", "n_violations"), [(e, float(n)) for e, n, _ in counts]),
            "genericity": (("c", "fraction"), [(c, f) for c, f in zip(table.c_values, fractions)]),
        },
    )


# --- direct simulations -----------------------------------------------------


def _bloch_series(traj: BlochTrajectory):
    n = traj.n_levels
    header = (
        ("t",)
        + tuple(f"pop_{i + 1}" for i in range(n))
        + ("coherence_l1", "trace", "herm_residual")
    )
    pops = traj.populations()
    rows = [
        (float(traj.times[i]),)
        + tuple(float(x) for x in pops[i])
        + (
            float(traj.coherence_l1[i]),
            float(np.real(traj.trace[i])),
            float(traj.herm_residual[i]),
        )
        for i in range(traj.times.size)
    ]
    return header, rows


def _bloch_cell(task):
    sys_, field, scaling, rho0, solver = task
    traj = integrate_bloch(sys_, field, scaling, well_prepared_state(rho0), solver)
    report = conservation_diagnostics(traj)
    return scaling.eps, report, _bloch_series(traj)


def run_bloch_simulation(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """One Bloch integration per eps, with conservation diagnostics."""
    _require(cfg, system=True, field=True)
    rho0 = cfg.initial_populations()
    tasks = [
        (cfg.system, cfg.field, Scaling(e, cfg.mu, cfg.p), rho0, cfg.solver)
        for e in cfg.eps
    ]
    cells = _pmap(_bloch_cell, tasks, jobs)

    rows = []
    series = {}
    passed = True
    for i, (eps, report, (header, data)) in enumerate(cells):
        rows.append(
            {
                "eps": eps,
                "trace_drift": report.max_trace_drift,
                "herm_residual": report.max_herm_residual,
                "negative_population": report.worst_negative_population,
                "ok": report.ok,
            }
        )
        passed = passed and report.ok
        series[f"bloch_{i:02d}"] = (header, data)
    return StudyResult(
        name="simulate-bloch",
        passed=passed,
        rows=tuple(rows),
        slope=None,
        slope_stderr=None,
        expected_slope=None,
        slope_tolerance=None,
        notes=tuple(f"eps={r['eps']}: ok={r['ok']}" for r in rows),
        config=cfg.resolved,
        metadata=_metadata(),
        series=series,
    )


def _rate_table(cfg: ExperimentConfig, scaling: Scaling) -> np.ndarray:
    kind = cfg.rate["kind"]
    sys_, field = cfg.system, cfg.field
    if kind == "bare":
        return np.asarray(sys_.W, dtype=float)
    _require(cfg, field=True)
    if kind == "averaged":
        return psi_averaged(sys_, field, scaling) + sys_.W
    res = resonance_set(sys_, field)
    return w_mod(sys_, psi_dominant(sys_, field, scaling, res))


def run_rate_simulation(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Integrate the selected rate equation per eps and check conservation."""
    _require(cfg, system=True)
    rho0 = cfg.initial_populations()
    T, steps = cfg.rate["t_final"], cfg.rate["steps"]
    times = np.linspace(0.0, T, steps + 1)

    rows = []
    series = {}
    passed = True
    for i, e in enumerate(cfg.eps):
        scaling = Scaling(e, cfg.mu, cfg.p)
        table = _rate_table(cfg, scaling)
        pops = _expm_trajectory(sharpen(table).matrix, rho0, times)
        mass_drift = float(np.abs(pops.sum(axis=1) - rho0.sum()).max())
        min_pop = float(pops.min())
        target = equilibrium_state(table, rho0)
        rows.append(
            {
                "eps": float(e),
                "kind": cfg.rate["kind"],
                "mass_drift": mass_drift,
                "min_population": min_pop,
                "final_equilibrium_distance": float(np.abs(pops[-1] - target).max()),
            }
        )
        passed = passed and mass_drift <= 1e-10 and min_pop >= -1e-10
        header = ("t",) + tuple(f"pop_{j + 1}" for j in range(pops.shape[1]))
        series[f"rate_{i:02d}"] = (
            header,
            [(float(t),) + tuple(float(x) for x in pops[j]) for j, t in enumerate(times)],
        )
    return StudyResult(
        name="simulate-rate",
        passed=passed,
        rows=tuple(rows),
        slope=None,
        slope_stderr=None,
        expected_slope=None,
        slope_tolerance=None,
        notes=tuple(
            f"eps={r['eps']}: mass drift {r['mass_drift']:.2e}, min pop {r['min_population']:.2e}"
            for r in rows
        ),
        config=cfg.resolved,
        metadata=_metadata(),
        series=series,
    )


def run_rate_tables(cfg: ExperimentConfig, seed: int = 0, jobs: int = 1) -> StudyResult:
    """Emit the rate tables and check the splitting identity per eps."""
    _require(cfg, system=True, field=True)
    sys_, field = cfg.system, cfg.field
    res = resonance_set(sys_, field)
    regime = regime_classify(cfg.mu, cfg.p, finite_N=True)

    rows = []
    identity = []
    passed = True
    for e in cfg.eps:
        scaling = Scaling(e, cfg.mu, cfg.p)
        averaged = psi_averaged(sys_, field, scaling)
        row = {"eps": float(e), "averaged": averaged.tolist()}
        if cfg.mu > 0.0:
            dom = psi_dominant(sys_, field, scaling, res)
            A, B_eps, nu = split_AB(sys_, field, scaling, res)
            B0 = b_limit(sys_, field, scaling, res)
            recombined = e ** (-cfg.mu) * A + e ** (-nu) * B_eps
            scale = float(np.abs(dom).max())
            resid = float(np.abs(recombined - dom).max()) / (scale if scale > 0.0 else 1.0)
            passed = passed and resid <= 1e-12
            identity.append((float(e), resid))
            row.update(
                {
                    "dominant": dom.tolist(),
                    "A": A.tolist(),
                    "B_eps": B_eps.tolist(),
                    "B0": B0.tolist(),
                    "nu": nu,
                    "splitting_residual": resid,
                }
            )
        rows.append(row)

    resonances = {f"{a},{b}": [list(beta) for beta in betas] for (a, b), betas in sorted(res.pairs.items())}
    rows.append(
        {
            "part": "classification",
            "ratio": regime.ratio,
            "sigma": regime.sigma,
            "nu": regime.nu,
            "projector": regime.projector,
            "difference": regime.difference,
            "resonances": resonances,
        }
    )
    series = {}
    if identity:
        series["splitting"] = (("eps", "identity_residual"), identity)
    return StudyResult(
        name="rates",
        passed=passed,
        rows=tuple(rows),
        slope=None,
        slope_stderr=None,
        expected_slope=None,
        slope_tolerance=None,
        notes=(f"{len(res.pairs)} resonant ordered pairs", f"regime: {regime.difference or regime.notes}"),
        config=cfg.resolved,
        metadata=_metadata(),
        series=series,
    )


# --- emission ---------------------------------------------------------------


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_study(out_dir, result: StudyResult) -> Path:
    """Lay the result out as result.json plus one CSV per series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "result.json", "w", newline="") as fh:
        json.dump(result.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for stem, (header, data) in result.series.items():
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(_csv_cell(x) for x in row) + "\n")
    return out
