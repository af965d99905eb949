"""Rate-equation integration, time-layer analysis, and level truncation.

The population dynamics dy/dt = (eps^{-mu} A + eps^{-nu} B_eps + W)_# y
splits into a fast transversal part that collapses onto the joint
kernel of the singular generators within an initial layer, and a slow
part evolving under the projected bare rates.  This module integrates
both, measures the layer (decay rate, plateau), computes the spectral
gap that governs it, and provides the finite-section tools for families
with infinitely many levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import LevelSystem, QuasiPeriodicField, Scaling
from .rates import (
    RegimeInfo,
    b_limit,
    psi_averaged,
    psi_dominant,
    regime_classify,
    resonance_set,
    split_AB,
)
from .sharp_ops import kernel_basis, mixed_norm, sharpen

__all__ = [
    "ProjectorSet",
    "LayerFit",
    "RateTrajectory",
    "LayeredRun",
    "LevelFamily",
    "TruncationReport",
    "integrate_rate",
    "build_projectors",
    "spectral_gap_c",
    "timelayer_analysis",
    "limit_system",
    "solve_layered",
    "truncate",
    "choose_N",
]

_KERNEL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class RateTrajectory:
    times: np.ndarray        # (n_snap,)
    populations: np.ndarray  # (n_snap, N)

    @property
    def n_levels(self) -> int:
        return self.populations.shape[1]


def _expm_trajectory(M: np.ndarray, y0: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.empty((times.size, y0.size))
    for i, t in enumerate(times):
        out[i] = scipy.linalg.expm(t * M) @ y0 if t != 0.0 else y0
    return out


def integrate_rate(
    rate: np.ndarray, rho_d0: np.ndarray, T: float, steps: int
) -> RateTrajectory:
    """Populations exp(t rate_#) rho_d0 at steps+1 uniform snapshot times.

    The generator is time-independent, so each snapshot is a dense
    matrix exponential: exact up to exponential accuracy, stiff or not.
    """
    if not T > 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    M = sharpen(rate).matrix
    times = np.linspace(0.0, T, int(steps) + 1)
    return RateTrajectory(times=times, populations=_expm_trajectory(M, np.asarray(rho_d0, dtype=float), times))


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """Projectors for the layer analysis.

    Pi0 projects onto the complement of the fully decoupled levels
    (zero rows and columns in the singular tables and the bare rates);
    Pi onto the joint kernel of the singular generators intersected with
    that complement.  The decoupled directions also sit in the kernel,
    so the projector the layer estimates use is Pi plus (1 - Pi0),
    available as full_kernel().  basis holds the columns spanning
    range(Pi).
    """

    Pi0: np.ndarray
    Pi: np.ndarray
    basis: np.ndarray
    sigma0: tuple[int, ...]
    regime: RegimeInfo

    def full_kernel(self) -> np.ndarray:
        n = self.Pi.shape[0]
        return self.Pi + (np.eye(n) - self.Pi0)


def _stable_kernel_basis(M: np.ndarray) -> np.ndarray:
    """Kernel basis with a guard against rank instability near the cutoff."""
    if M.size == 0:
        return np.zeros((0, 0))
    _, s, vt = np.linalg.svd(M)
    top = s[0] if s.size else 0.0
    cutoff = _KERNEL_RTOL * top
    risky = (s > cutoff) & (s < 10.0 * cutoff)
    if np.any(risky):
        raise ValueError(
            f"kernel rank unstable: singular value {s[risky][0]:.3e} within a "
            f"decade of the cutoff {cutoff:.3e}"
        )
    return vt[s <= cutoff].T


def build_projectors(
    A: np.ndarray,
    B0: np.ndarray,
    regime: RegimeInfo,
    W: np.ndarray | None = None,
) -> ProjectorSet:
    """Construct the layer projectors for the given regime.

    Levels whose rows and columns vanish in A, B0, and W never move and
    form sigma0.  On the remaining levels the kernel is taken from the
    stacked generators [A_#; B0_#] (joint kernel) or from A_# alone when
    the regime dictates the coarser projector.
    """
    A = np.asarray(A, dtype=float)
    B0 = np.asarray(B0, dtype=float)
    n = A.shape[0]
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(A), initial=0.0)):
        raise ValueError("A must be symmetric")
    if np.max(np.abs(B0 - B0.T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(B0), initial=0.0)):
        raise ValueError("B0 must be symmetric")

    touched = np.zeros(n, dtype=bool)
    tables = [A, B0] if W is None else [A, B0, np.asarray(W, dtype=float)]
    for tbl in tables:
        touched |= np.any(tbl != 0.0, axis=0) | np.any(tbl != 0.0, axis=1)
    sigma0 = tuple(int(i) for i in np.flatnonzero(~touched))
    active = np.flatnonzero(touched)

    Pi0 = np.diag(touched.astype(float))

    MA = sharpen(A).matrix
    MB = sharpen(B0).matrix
    sub = np.ix_(active, active)
    if regime.projector == "pi_A":
        stacked = MA[sub]
    else:
        stacked = np.vstack([MA[sub], MB[sub]])
    if active.size:
        basis_sub = _stable_kernel_basis(stacked)
    else:
        basis_sub = np.zeros((0, 0))

    basis = np.zeros((n, basis_sub.shape[1]))
    basis[active] = basis_sub
    Pi = basis @ basis.T
    return ProjectorSet(Pi0=Pi0, Pi=Pi, basis=basis, sigma0=sigma0, regime=regime)


def spectral_gap_c(A: np.ndarray, B0: np.ndarray, proj: ProjectorSet) -> float:
    """Gap of the combined singular generator transversal to the kernel.

    Returns c = smallest magnitude among eigenvalues of
    -(1-P)(A_# + B0_#)(1-P) restricted to range(1-P), where P spans the
    full kernel (projector plus decoupled directions); +inf when the
    transversal space is trivial (no layer at all).
    """
    P = proj.full_kernel()
    n = P.shape[0]
    lam, Q = np.linalg.eigh(P)
    trans = Q[:, lam < 0.5]  # orthonormal basis of range(1-P)
    if trans.shape[1] == 0:
        return math.inf
    S = sharpen(np.asarray(A, dtype=float)).matrix + sharpen(np.asarray(B0, dtype=float)).matrix
    R = trans.T @ S @ trans
    eigs = np.linalg.eigvalsh(0.5 * (R + R.T))
    return float(-eigs.max())


@dataclass(frozen=True)
class LayerFit:
    rate: float | None           # fitted decay exponent lambda-hat, None if no layer
    plateau: float
    predicted_rate: float | None  # c * eps^{-decay exponent} when c supplied
    duration: float | None       # estimated time to reach the plateau
    residual: float              # rms of the log-linear fit
    n_window: int
    layered: bool


def timelayer_analysis(
    traj: RateTrajectory,
    proj: ProjectorSet,
    scaling: Scaling,
    regime: RegimeInfo,
    c: float | None = None,
) -> LayerFit:
    """Fit the decay of the transversal component of a rate trajectory.

    The series ||(1-P)y(t)|| is fit log-linearly on the window where it
    sits between 10x the plateau (median of the final tenth of the
    snapshots) and half its initial value.  Data starting inside the
    kernel has no layer and comes back with rate None; a decaying
    segment that the snapshot grid fails to resolve raises.
    """
    P = proj.full_kernel()
    resid = traj.populations @ (np.eye(P.shape[0]) - P).T
    r = np.linalg.norm(resid, axis=1)
    n_snap = r.size
    tail = max(1, n_snap // 10)
    plateau = float(np.median(r[-tail:]))
    r0 = r[0]

    predicted = None
    if c is not None and math.isfinite(c):
        predicted = c * scaling.eps ** (-regime.sigma)

    floor = max(10.0 * plateau, 1e-300)
    if r0 <= max(floor, 1e-14 * (1.0 + float(np.abs(traj.populations[0]).max()))):
        return LayerFit(
            rate=None, plateau=plateau, predicted_rate=predicted,
            duration=None, residual=0.0, n_window=0, layered=False,
        )

    mask = (r >= floor) & (r <= 0.5 * r0) & (r > 0.0)
    if mask.sum() < 2:
        raise ValueError(
            f"no decaying segment found: {int(mask.sum())} snapshot(s) between "
            f"10x plateau ({floor:.3e}) and half the initial size ({0.5 * r0:.3e})"
        )
    t_fit = traj.times[mask]
    log_r = np.log(r[mask])
    slope, intercept = np.polyfit(t_fit, log_r, 1)
    fit_resid = float(np.sqrt(np.mean((log_r - (slope * t_fit + intercept)) ** 2)))
    rate = -float(slope)
    duration = math.log(r0 / plateau) / rate if plateau > 0.0 and rate > 0.0 else None
    return LayerFit(
        rate=rate, plateau=plateau, predicted_rate=predicted,
        duration=duration, residual=fit_resid, n_window=int(mask.sum()),
        layered=True,
    )


def limit_system(
    proj: ProjectorSet,
    W: np.ndarray,
    psi0_nonsing: np.ndarray | None = None,
) -> np.ndarray:
    """Generator of the slow dynamics: P (W + Psi0_nonsing)_# P.

    The non-singular kernel remnant is nonzero only when the detuned
    part enters at order one, i.e. at ratio exactly 2; supplying one in
    any other regime is an error.
    """
    table = np.asarray(W, dtype=float)
    if psi0_nonsing is not None and np.any(psi0_nonsing != 0.0):
        if proj.regime.ratio != 2.0:
            raise ValueError(
                f"nonzero kernel remnant supplied at ratio {proj.regime.ratio}; "
                "it only survives at ratio 2"
            )
        table = table + np.asarray(psi0_nonsing, dtype=float)
    P = proj.full_kernel()
    return P @ sharpen(table).matrix @ P


def _default_layer_times(T: float) -> np.ndarray:
    early = np.geomspace(T * 1e-7, T, 241)
    uniform = np.linspace(0.0, T, 160)
    return np.unique(np.concatenate([[0.0], early, uniform]))


@dataclass(frozen=True, eq=False)
class LayeredRun:
    """Full singular run next to its projected limit."""

    times: np.ndarray
    full: RateTrajectory
    limit: RateTrajectory
    kernel_error: np.ndarray      # ||P (y - z)|| per snapshot
    proj: ProjectorSet
    regime: RegimeInfo
    A: np.ndarray
    B_eps: np.ndarray
    B0: np.ndarray
    nu: float
    c: float

    def transversal_norm(self) -> np.ndarray:
        P = self.proj.full_kernel()
        resid = self.full.populations @ (np.eye(P.shape[0]) - P).T
        return np.linalg.norm(resid, axis=1)


def solve_layered(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    rho_d0: np.ndarray,
    T: float,
    times: np.ndarray | None = None,
) -> LayeredRun:
    """Integrate the singular rate equation and its projected limit.

    The full generator is (eps^{-mu} A + eps^{-nu} B_eps + W)_#, the
    limit generator P (W [+ kernel remnant])_# P with z(0) = P y(0).
    Snapshot times default to a geometric+uniform union so both the
    layer and the plateau are resolved.
    """
    if scaling.mu == 0.0:
        raise ValueError("the layer analysis needs mu > 0 (nothing is singular at mu = 0)")
    if times is None:
        times = _default_layer_times(T)
    times = np.asarray(times, dtype=float)
    y0 = np.asarray(rho_d0, dtype=float)

    res = resonance_set(sys, field)
    A, B_eps, nu = split_AB(sys, field, scaling, res)
    B0 = b_limit(sys, field, scaling, res)
    regime = regime_classify(scaling.mu, scaling.p, finite_N=True)
    proj = build_projectors(A, B0, regime, W=sys.W)
    c = spectral_gap_c(A, B0, proj)

    eps = scaling.eps
    table_full = eps ** (-scaling.mu) * A + eps ** (-nu) * B_eps + sys.W
    M_full = sharpen(table_full).matrix
    y = _expm_trajectory(M_full, y0, times)

    remnant = B0 if regime.ratio == 2.0 else None
    Mz = limit_system(proj, sys.W, remnant)
    P = proj.full_kernel()
    z = _expm_trajectory(Mz, P @ y0, times)

    err = np.linalg.norm((y - z) @ P.T, axis=1)
    return LayeredRun(
        times=times,
        full=RateTrajectory(times=times, populations=y),
        limit=RateTrajectory(times=times, populations=z),
        kernel_error=err,
        proj=proj,
        regime=regime,
        A=A,
        B_eps=B_eps,
        B0=B0,
        nu=nu,
        c=c,
    )


def truncate(sys: LevelSystem, n_keep: int) -> LevelSystem:
    """Restrict every table to the leading n_keep levels."""
    n = sys.n_levels
    if not 1 <= n_keep <= n:
        raise ValueError(f"n_keep must lie in [1, {n}], got {n_keep}")
    k = int(n_keep)
    return LevelSystem(
        omega=sys.omega[:k],
        delta=sys.delta[:k],
        gamma=sys.gamma[:k, :k],
        W=sys.W[:k, :k],
        V=sys.V[:k, :k],
        temperature=sys.temperature,
    )


@dataclass(frozen=True)
class LevelFamily:
    """Rule generating truncations of a system with infinitely many levels.

    ``system(N)`` builds the leading N x N section, ``rho0(N)`` the
    matching initial populations.
    """

    system: object  # callable N -> LevelSystem
    rho0: object    # callable N -> populations
    field: QuasiPeriodicField


@dataclass(frozen=True)
class TruncationReport:
    n: int
    rho_tail: float
    w_tail: float
    psi_tail: float
    resonance_free_tail: bool
    checked: tuple[int, ...]


def _tail_mixed_norm(table: np.ndarray, n_keep: int) -> float:
    t = np.array(table)
    t[:n_keep, :n_keep] = 0.0
    return mixed_norm(np.abs(t))


def _truncation_surrogates(
    family: LevelFamily, scaling: Scaling, n: int
) -> tuple[float, float, float, bool]:
    big_n = 2 * n
    big = family.system(big_n)
    rho_big = np.asarray(family.rho0(big_n), dtype=float)
    rho_tail = float(np.linalg.norm(rho_big[n:]))
    w_tail = _tail_mixed_norm(big.W, n)

    res = resonance_set(big, family.field)
    if scaling.mu > 0.0:
        psi = psi_dominant(big, family.field, scaling, res)
    else:
        psi = psi_averaged(big, family.field, scaling)
    psi_tail = _tail_mixed_norm(psi, n)
    tail_free = all(max(a, b) < n for (a, b) in res.pairs)
    return rho_tail, w_tail, psi_tail, tail_free


def choose_N(
    family: LevelFamily,
    scaling: Scaling,
    params,
    nu_tol: float,
    hard_cap: int = 2**14,
    return_report: bool = False,
):
    """Smallest truncation size (by doubling) with all tail surrogates small.

    Checks, on the doubled reference system: the l2 tail of the initial
    populations, the mixed-norm tail of the bare rates, and the
    mixed-norm tail of the dominant kernel (the averaged kernel at
    mu = 0), each against nu_tol.  Reports whether the resonance set is
    confined below the chosen size, in which case the kernel tail
    vanishes identically and the choice is independent of eps.

    ``params`` (Diophantine scan parameters) is accepted for interface
    uniformity; the surrogates are computed from the tables directly.
    """
    if not nu_tol > 0.0:
        raise ValueError(f"nu_tol must be positive, got {nu_tol}")
    checked = []
    n = 1
    while n <= hard_cap:
        checked.append(n)
        rho_tail, w_tail, psi_tail, tail_free = _truncation_surrogates(family, scaling, n)
        if rho_tail <= nu_tol and w_tail <= nu_tol and psi_tail <= nu_tol:
            report = TruncationReport(
                n=n, rho_tail=rho_tail, w_tail=w_tail, psi_tail=psi_tail,
                resonance_free_tail=tail_free, checked=tuple(checked),
            )
            return (n, report) if return_report else n
        n *= 2
    raise ValueError(f"no truncation size up to {hard_cap} meets nu_tol={nu_tol}")
