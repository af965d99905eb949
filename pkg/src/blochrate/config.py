"""Configuration ingestion for the command-line studies.

The configuration is a single TOML file.  Sections:

  [system]   preset = "name"        one of the named presets, or explicit
             omega, V (+ optional V_imag), gamma (scalar or matrix),
             delta, W, temperature
  [field]    freq = [..], modes = [{alpha=[..], re=, im=}, ...],
             conjugate = true       adds missing mirror coefficients
  [scaling]  eps = [..] (strictly decreasing) or scalar, mu = , p =
  [solver]   t_final, h0, snapshot_stride
  [initial]  populations = [..]
  [rate]     kind = "bare" | "averaged" | "dominant", t_final, steps
  [study]    per-command knobs (channel, s_grid, regimes, t_large, ...)
  [dioph]    eta, b_max, n_samples, ball_radius, c_grid, levels

Unknown keys are rejected so typos fail loudly instead of silently
running with defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bloch_solver import SolverConfig
from .model import LevelSystem, QuasiPeriodicField
from .systems import PRESETS


class ConfigError(ValueError):
    pass


_SECTIONS = {"system", "field", "scaling", "solver", "initial", "rate", "study", "dioph"}

_SYSTEM_KEYS = {"preset", "omega", "delta", "gamma", "W", "V", "V_imag", "temperature"}
_FIELD_KEYS = {"freq", "modes", "conjugate"}
_SCALING_KEYS = {"eps", "mu", "p"}
_SOLVER_KEYS = {"t_final", "h0", "snapshot_stride"}
_INITIAL_KEYS = {"populations"}
_RATE_KEYS = {"kind", "t_final", "steps"}
_RATE_KINDS = {"bare", "averaged", "dominant"}


def _check_keys(section: str, table: dict, allowed: set[str]) -> None:
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"[{section}] has unknown keys: {sorted(extra)}")


def _gamma_table(raw, n: int) -> np.ndarray:
    if isinstance(raw, (int, float)):
        g = np.full((n, n), float(raw))
        np.fill_diagonal(g, 0.0)
        return g
    return np.asarray(raw, dtype=float)


def _build_system(table: dict) -> tuple[LevelSystem, QuasiPeriodicField | None]:
    _check_keys("system", table, _SYSTEM_KEYS)
    if "preset" in table:
        extra = set(table) - {"preset"}
        if extra:
            raise ConfigError(f"[system] preset excludes other keys, found {sorted(extra)}")
        name = table["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[name]()

    missing = {"omega", "V"} - set(table)
    if missing:
        raise ConfigError(f"[system] needs {sorted(missing)} (or a preset)")
    omega = np.asarray(table["omega"], dtype=float)
    n = omega.size
    V = np.asarray(table["V"], dtype=float).astype(complex)
    if "V_imag" in table:
        V = V + 1j * np.asarray(table["V_imag"], dtype=float)
    sys_ = LevelSystem(
        omega=omega,
        delta=np.asarray(table.get("delta", np.zeros(n)), dtype=float),
        gamma=_gamma_table(table.get("gamma", 1.0), n),
        W=np.asarray(table.get("W", np.zeros((n, n))), dtype=float),
        V=V,
        temperature=table.get("temperature"),
    )
    return sys_, None


def _build_field(table: dict) -> QuasiPeriodicField:
    _check_keys("field", table, _FIELD_KEYS)
    if "freq" not in table or "modes" not in table:
        raise ConfigError("[field] needs freq and modes")
    freq = tuple(float(f) for f in table["freq"])
    conjugate = bool(table.get("conjugate", True))
    coeffs: dict[tuple[int, ...], complex] = {}
    for mode in table["modes"]:
        extra = set(mode) - {"alpha", "re", "im"}
        if extra:
            raise ConfigError(f"field mode has unknown keys: {sorted(extra)}")
        alpha = tuple(int(a) for a in mode["alpha"])
        if len(alpha) != len(freq):
            raise ConfigError(f"mode index {alpha} does not match {len(freq)} frequencies")
        value = complex(float(mode.get("re", 0.0)), float(mode.get("im", 0.0)))
        coeffs[alpha] = coeffs.get(alpha, 0.0) + value
    if conjugate:
        for alpha, value in list(coeffs.items()):
            mirror = tuple(-a for a in alpha)
            if mirror not in coeffs:
                coeffs[mirror] = value.conjugate()
    return QuasiPeriodicField(freq=freq, coeffs=coeffs)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a study needs, plus the resolved TOML for provenance."""

    system: LevelSystem | None
    field: QuasiPeriodicField | None
    eps: tuple[float, ...]
    mu: float
    p: float
    solver: SolverConfig
    rho0: tuple[float, ...] | None
    rate: dict
    study: dict
    dioph: dict
    resolved: dict

    def scaling_grid(self):
        from .model import Scaling

        return tuple(Scaling(eps=e, mu=self.mu, p=self.p) for e in self.eps)

    def initial_populations(self) -> np.ndarray:
        if self.system is None:
            raise ConfigError("no [system] section was configured")
        n = self.system.n_levels
        if self.rho0 is None:
            rho = np.zeros(n)
            rho[0] = 1.0
            return rho
        rho = np.asarray(self.rho0, dtype=float)
        if rho.size != n:
            raise ConfigError(f"[initial] populations has {rho.size} entries for {n} levels")
        return rho


def parse_config(data: dict) -> ExperimentConfig:
    extra = set(data) - _SECTIONS
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")

    system = None
    field = None
    if "system" in data:
        system, field = _build_system(data["system"])
    if "field" in data:
        field = _build_field(data["field"])

    scaling = data.get("scaling", {})
    _check_keys("scaling", scaling, _SCALING_KEYS)
    raw_eps = scaling.get("eps", [0.1])
    if isinstance(raw_eps, (int, float)):
        raw_eps = [raw_eps]
    eps = tuple(float(e) for e in raw_eps)
    if not eps:
        raise ConfigError("[scaling] eps must not be empty")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"[scaling] eps must be strictly decreasing, got {list(eps)}")
    mu = float(scaling.get("mu", 0.25))
    p = float(scaling.get("p", 1.0))

    solver_tbl = data.get("solver", {})
    _check_keys("solver", solver_tbl, _SOLVER_KEYS)
    stride = solver_tbl.get("snapshot_stride")
    solver = SolverConfig(
        t_final=float(solver_tbl.get("t_final", 1.0)),
        h0=float(solver_tbl.get("h0", 0.1)),
        snapshot_stride=None if stride is None else int(stride),
    )

    initial = data.get("initial", {})
    _check_keys("initial", initial, _INITIAL_KEYS)
    rho0 = initial.get("populations")
    if rho0 is not None:
        rho0 = tuple(float(x) for x in rho0)

    rate = dict(data.get("rate", {}))
    _check_keys("rate", rate, _RATE_KEYS)
    rate.setdefault("kind", "dominant")
    if rate["kind"] not in _RATE_KINDS:
        raise ConfigError(f"[rate] kind must be one of {sorted(_RATE_KINDS)}, got {rate['kind']!r}")
    rate["t_final"] = float(rate.get("t_final", 1.0))
    rate["steps"] = int(rate.get("steps", 400))

    cfg = ExperimentConfig(
        system=system,
        field=field,
        eps=eps,
        mu=mu,
        p=p,
        solver=solver,
        rho0=rho0,
        rate=rate,
        study=dict(data.get("study", {})),
        dioph=dict(data.get("dioph", {})),
        resolved=_resolve(data, eps, mu, p, solver, rate),
    )
    if cfg.system is not None and cfg.rho0 is not None:
        cfg.initial_populations()
    return cfg


def _resolve(data: dict, eps, mu, p, solver: SolverConfig, rate: dict) -> dict:
    """Plain-data copy of the configuration with defaults filled in."""
    out = _plain(data)
    out.setdefault("scaling", {})
    out["scaling"].update({"eps": list(eps), "mu": mu, "p": p})
    out.setdefault("solver", {})
    out["solver"].update(
        {
            "t_final": solver.t_final,
            "h0": solver.h0,
            "snapshot_stride": solver.snapshot_stride,
        }
    )
    out.setdefault("rate", {})
    out["rate"].update(rate)
    return out


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def load_config(path) -> ExperimentConfig:
    with open(Path(path), "rb") as fh:
        data = tomllib.load(fh)
    return parse_config(data)
