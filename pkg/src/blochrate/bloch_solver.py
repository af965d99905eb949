"""Fixed-step integrator for the scaled Bloch system.

The state is an N x N density matrix rho(t) driven by

    d/dt rho(n,m) = eps^{-2} [ -i omega_eps(n,m) rho(n,m) + Q(rho)(n,m) ]
                    + i eps^{-1} f(t/eps^2) [V, rho](n,m),

where omega_eps(n,m) = omega(n,m) + eps^p delta(n,m), Q damps each
coherence by eps^mu gamma(n,m) and moves populations with the bare rate
table W at order eps^2, and f is the quasi-periodic field.

The linear entrywise part (phases at eps^{-2}, damping at eps^{mu-2})
is removed exactly: each step advances the interaction-picture variable
sigma(n,m) = e^{-Omega(n,m) s / eps^2} rho(t_j + s)(n,m) relative to the
step start with a classical 4th-order rule, where Omega = -i omega_eps
- eps^mu gamma (zero diagonal).  Re-centering every step keeps all
entrywise factors bounded by exp of the step budget, so nothing
overflows no matter how small eps is.  The entrywise factors have unit
diagonal and Hermitian symmetry, so trace and Hermiticity survive to
round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LevelSystem, QuasiPeriodicField, Scaling
from .sharp_ops import sharpen

__all__ = [
    "SolverConfig",
    "BlochTrajectory",
    "ConservationReport",
    "bloch_rhs",
    "integrate_bloch",
    "conservation_diagnostics",
    "coherence_norm_series",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class SolverConfig:
    t_final: float = 1.0
    h0: float = 0.1
    snapshot_stride: int | None = None  # None: aim for ~400 snapshots
    method: str = "interaction_rk4"

    def __post_init__(self) -> None:
        if not self.t_final > 0.0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if not self.h0 > 0.0:
            raise ValueError(f"h0 must be positive, got {self.h0}")
        if self.method != "interaction_rk4":
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True, eq=False)
class BlochTrajectory:
    times: np.ndarray                # (n_snap,)
    states: np.ndarray               # (n_snap, N, N) complex
    trace: np.ndarray                # (n_snap,) complex
    herm_residual: np.ndarray        # (n_snap,)
    min_population: np.ndarray       # (n_snap,)
    coherence_l1: np.ndarray         # (n_snap,)

    @property
    def n_levels(self) -> int:
        return self.states.shape[1]

    def populations(self) -> np.ndarray:
        """Real part of the diagonals, shape (n_snap, N)."""
        return np.real(np.diagonal(self.states, axis1=1, axis2=2))


def _coherence_l1(rho: np.ndarray) -> float:
    off = np.abs(rho).sum() - np.abs(np.diagonal(rho)).sum()
    return float(off)


def bloch_rhs(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    t: float,
    rho: np.ndarray,
) -> np.ndarray:
    """Right-hand side of the scaled Bloch system at time t.

    Reference implementation used by oracles and tests; the integrator
    works on the stiffness-removed form instead.
    """
    rho = np.asarray(rho, dtype=complex)
    n = sys.n_levels
    if rho.shape != (n, n):
        raise ValueError(f"state has shape {rho.shape}, expected {(n, n)}")
    eps, mu, p = scaling.eps, scaling.mu, scaling.p
    omega_eps = sys.omega_gaps() + eps**p * sys.delta_gaps()
    linear = (-1j * omega_eps - eps**mu * sys.gamma) / eps**2
    np.fill_diagonal(linear, 0.0)

    out = linear * rho
    W_op = sharpen(sys.W).matrix
    out[np.diag_indices(n)] += W_op @ np.diagonal(rho)

    fval = _field_at(field, t / eps**2)
    out += (1j / eps) * fval * (sys.V @ rho - rho @ sys.V)
    return out


def _field_at(field: QuasiPeriodicField, tau: float) -> float:
    amps = field._amp
    if amps.size == 0:
        return 0.0
    return float(np.real(amps @ np.exp(1j * tau * field._alpha_dot_freq)))


def step_size(sys: LevelSystem, field: QuasiPeriodicField, scaling: Scaling, h0: float) -> float:
    """Base step resolving the fastest retained oscillation."""
    eps, p = scaling.eps, scaling.p
    omega_eps = sys.omega_gaps() + eps**p * sys.delta_gaps()
    fastest = 1.0 + float(np.max(np.abs(omega_eps), initial=0.0))
    dots = field.mode_frequencies()
    if dots.size:
        fastest += float(np.max(np.abs(dots)))
    return h0 * eps**2 / fastest


def integrate_bloch(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    rho0: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
) -> BlochTrajectory:
    """Integrate the Bloch system on [0, t_final] and collect snapshots."""
    rho0 = np.asarray(rho0, dtype=complex)
    n = sys.n_levels
    if rho0.shape != (n, n):
        raise ValueError(f"initial state has shape {rho0.shape}, expected {(n, n)}")
    eps, mu, p = scaling.eps, scaling.mu, scaling.p
    T = cfg.t_final

    h = step_size(sys, field, scaling, cfg.h0)
    if h < 1e-15 * max(1.0, T):
        raise ValueError(f"step size underflow: h={h:.3e} at eps={eps}")
    n_steps = max(1, math.ceil(T / h))
    h = T / n_steps

    omega_eps = sys.omega_gaps() + eps**p * sys.delta_gaps()
    Omega = -1j * omega_eps - eps**mu * sys.gamma
    np.fill_diagonal(Omega, 0.0)
    E_half = np.exp(Omega * (0.5 * h / eps**2))
    E_full = np.exp(Omega * (h / eps**2))
    E_half_inv = np.exp(-Omega * (0.5 * h / eps**2))
    E_full_inv = np.exp(-Omega * (h / eps**2))

    W_op = sharpen(sys.W).matrix
    V = sys.V
    amps = field._amp
    dots = field.mode_frequencies()
    inv_eps2 = 1.0 / eps**2

    def nonstiff(t: float, state: np.ndarray) -> np.ndarray:
        if amps.size:
            fval = float(np.real(amps @ np.exp(1j * (t * inv_eps2) * dots)))
            out = (1j / eps * fval) * (V @ state - state @ V)
        else:
            out = np.zeros_like(state)
        out[np.diag_indices(n)] += W_op @ np.diagonal(state)
        return out

    stride = cfg.snapshot_stride or max(1, n_steps // 400)

    times: list[float] = []
    snaps: list[np.ndarray] = []

    def record(j: int, state: np.ndarray) -> None:
        if not np.all(np.isfinite(state.view(float))):
            raise FloatingPointError(f"non-finite state at t={j * h:.6g}")
        times.append(j * h)
        snaps.append(state.copy())

    rho = rho0.astype(complex)
    record(0, rho)
    for j in range(n_steps):
        t = j * h
        k1 = nonstiff(t, rho)
        k2 = E_half_inv * nonstiff(t + 0.5 * h, E_half * (rho + 0.5 * h * k1))
        k3 = E_half_inv * nonstiff(t + 0.5 * h, E_half * (rho + 0.5 * h * k2))
        k4 = E_full_inv * nonstiff(t + h, E_full * (rho + h * k3))
        rho = E_full * (rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if (j + 1) % stride == 0 or j + 1 == n_steps:
            record(j + 1, rho)

    times_arr = np.array(times)
    states = np.array(snaps)
    diag = np.diagonal(states, axis1=1, axis2=2)
    return BlochTrajectory(
        times=times_arr,
        states=states,
        trace=diag.sum(axis=1),
        herm_residual=np.abs(states - states.conj().transpose(0, 2, 1)).max(axis=(1, 2)),
        min_population=np.real(diag).min(axis=1),
        coherence_l1=np.array([_coherence_l1(s) for s in states]),
    )


@dataclass(frozen=True)
class ConservationReport:
    max_trace_drift: float
    max_herm_residual: float
    worst_negative_population: float  # max(0, -min_n rho(n,n)) over the run

    @property
    def ok(self) -> bool:
        return (
            self.max_trace_drift <= 1e-8
            and self.max_herm_residual <= 1e-8
            and self.worst_negative_population <= 1e-8
        )


def conservation_diagnostics(traj: BlochTrajectory) -> ConservationReport:
    if traj.times.size == 0:
        raise ValueError("empty trajectory")
    drift = np.abs(traj.trace - traj.trace[0]).max()
    return ConservationReport(
        max_trace_drift=float(drift),
        max_herm_residual=float(traj.herm_residual.max()),
        worst_negative_population=float(max(0.0, -traj.min_population.min())),
    )


def coherence_norm_series(traj: BlochTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-snapshot l1 norm of the off-diagonal part, as (times, values)."""
    if traj.times.size == 0:
        raise ValueError("empty trajectory")
    return traj.times, traj.coherence_l1


def trajectory_to_csv(traj: BlochTrajectory, path) -> None:
    """Write the trajectory as CSV: t, populations, coherence, trace, residual."""
    n = traj.n_levels
    pops = traj.populations()
    header = ["t"] + [f"pop_{i + 1}" for i in range(n)] + ["coherence_l1", "trace", "herm_residual"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(traj.times.size):
            row = [repr(float(traj.times[i]))]
            row += [repr(float(x)) for x in pops[i]]
            row.append(repr(float(traj.coherence_l1[i])))
            row.append(repr(float(np.real(traj.trace[i]))))
            row.append(repr(float(traj.herm_residual[i])))
            fh.write(",".join(row) + "\n")
