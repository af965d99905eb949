"""The sharp-operator algebra for population rate tables.

A rate table A holds nonnegative transition rates A[n, m] for n -> m
with zero diagonal.  Its sharp operator is the generator

    M[n, k] = A[k, n]   (n != k),      M[n, n] = -sum_m A[n, m],

whose column sums vanish: d/dt sum_n v(n) = 0 along dv/dt = M v.  For a
symmetric table the generator is a (negated) graph Laplacian, hence
symmetric non-positive, and constants on each connected block span its
kernel.  Everything here is dense linear algebra at small N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SharpOperator",
    "SpectralReport",
    "sharpen",
    "apply_sharp",
    "mixed_norm",
    "schur_apply",
    "stable_blocks",
    "equilibrium_state",
    "thermodynamic_equilibrium",
    "spectral_check",
    "evolve_sharp",
    "kernel_basis",
    "kernel_degeneration_diagnostic",
]

_KERNEL_RTOL = 1e-10
_PATTERN_RTOL = 1e-14


def _check_rate_table(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"rate table must be square, got shape {A.shape}")
    off = ~np.eye(A.shape[0], dtype=bool)
    if A.size and np.any(A[off] < 0.0):
        raise ValueError("rate table has a negative off-diagonal entry")
    if np.any(np.abs(np.diag(A)) > 0.0):
        raise ValueError("rate table has a nonzero diagonal entry")
    return A


@dataclass(frozen=True, eq=False)
class SharpOperator:
    """Dense generator matrix built from a rate table."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def sharpen(A: np.ndarray) -> SharpOperator:
    """Build the generator of the rate table A.

    Off the diagonal the generator transposes A (inflow); the diagonal
    collects the total outflow with a minus sign, so column sums vanish.
    """
    A = _check_rate_table(A)
    M = A.T.copy()
    np.fill_diagonal(M, 0.0)
    np.fill_diagonal(M, -A.sum(axis=1))
    return SharpOperator(M)


def apply_sharp(op: SharpOperator, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (op.n,):
        raise ValueError(f"vector has shape {v.shape}, operator expects ({op.n},)")
    return op.matrix @ v


def mixed_norm(A: np.ndarray) -> float:
    """Max column sum plus max row sum of |A|; dominates the generator norm on every l^q."""
    A = np.abs(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(A.sum(axis=0).max() + A.sum(axis=1).max())


def schur_apply(A: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Commutator-form action (n,m) -> sum_k A(n,k)u(k,m) - A(k,m)u(n,k) = Au - uA."""
    A = np.asarray(A)
    u = np.asarray(u)
    if A.shape != u.shape or A.ndim != 2:
        raise ValueError(f"shape mismatch: table {A.shape} vs matrix {u.shape}")
    return A @ u - u @ A


def stable_blocks(A: np.ndarray) -> list[list[int]]:
    """Connected components of the coupling graph of A (0-based levels).

    Entries below 1e-14 times the largest magnitude count as zero.  The
    thresholded pattern must be symmetric (rates in one direction only
    would make the block structure ill-defined); otherwise raises.
    Singleton blocks are levels the table never moves.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    pattern = np.abs(A) > _PATTERN_RTOL * scale if scale > 0.0 else np.zeros_like(A, dtype=bool)
    np.fill_diagonal(pattern, False)
    if not np.array_equal(pattern, pattern.T):
        bad = np.argwhere(pattern != pattern.T)
        raise ValueError(f"one-sided coupling at level pair {tuple(bad[0])}: block pattern must be symmetric")

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in np.argwhere(pattern):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [sorted(groups[r]) for r in sorted(groups)]


def kernel_basis(M: np.ndarray) -> np.ndarray:
    """Orthonormal kernel basis (columns) via SVD with a relative threshold."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, 0))
    _, s, vt = np.linalg.svd(M)
    cutoff = _KERNEL_RTOL * (s[0] if s.size else 0.0)
    null = vt[s <= cutoff] if s.size else vt
    return null.T


def equilibrium_state(A: np.ndarray, rho0: np.ndarray) -> np.ndarray:
    """Long-time state of the rate dynamics started from rho0.

    On each coupled block the kernel of the block generator must be
    one-dimensional; the kernel vector is rescaled so the block keeps
    the population mass it started with.  Uncoupled levels keep their
    initial value.
    """
    A = _check_rate_table(A)
    rho0 = np.asarray(rho0, dtype=float)
    out = np.array(rho0)
    for block in stable_blocks(A):
        if len(block) == 1:
            continue
        idx = np.array(block)
        Mb = sharpen(A[np.ix_(idx, idx)]).matrix
        basis = kernel_basis(Mb)
        if basis.shape[1] != 1:
            raise ValueError(
                f"kernel dimension {basis.shape[1]} on block {block}; expected 1"
            )
        vec = basis[:, 0]
        total = math.fsum(vec)
        if abs(total) < 1e-12:
            raise ValueError(f"degenerate kernel vector on block {block}")
        out[idx] = vec * (math.fsum(rho0[idx]) / total)
    return out


def thermodynamic_equilibrium(omega: np.ndarray, T: float) -> np.ndarray:
    """Gibbs populations exp(-omega/T)/Z, computed shift-stably."""
    if not T > 0.0:
        raise ValueError(f"temperature must be positive, got {T}")
    omega = np.asarray(omega, dtype=float)
    w = np.exp(-(omega - omega.min()) / T)
    return w / math.fsum(w)


@dataclass(frozen=True)
class SpectralReport:
    max_real_eigenvalue: float
    kernel_dims: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...]
    max_rayleigh: float | None


def spectral_check(op: SharpOperator, symmetric: bool, seed: int = 0) -> SpectralReport:
    """Diagnose the generator spectrum.

    Reports the largest real part over all eigenvalues, the kernel
    dimension on every stable block, and (for a symmetric table) the
    largest Rayleigh quotient over 200 seeded random vectors.  All three
    are expected non-positive up to round-off for a valid table.
    """
    M = op.matrix
    eigs = np.linalg.eigvals(M)
    max_real = float(np.max(eigs.real)) if eigs.size else 0.0

    # recover the table pattern: off-diagonal of M transposed
    A_pattern = M.T.copy()
    np.fill_diagonal(A_pattern, 0.0)
    blocks = stable_blocks(np.abs(A_pattern))
    dims = []
    for block in blocks:
        idx = np.array(block)
        dims.append(kernel_basis(M[np.ix_(idx, idx)]).shape[1])

    rayleigh = None
    if symmetric:
        rng = np.random.default_rng(seed)
        worst = -math.inf
        for _ in range(200):
            v = rng.standard_normal(op.n)
            worst = max(worst, float(v @ M @ v) / float(v @ v))
        rayleigh = worst

    return SpectralReport(
        max_real_eigenvalue=max_real,
        kernel_dims=tuple(dims),
        blocks=tuple(tuple(b) for b in blocks),
        max_rayleigh=rayleigh,
    )


def evolve_sharp(op: SharpOperator, v: np.ndarray, t: float) -> np.ndarray:
    """Apply the semigroup exp(t M) to v.

    Symmetric generators go through an eigendecomposition, everything
    else through dense scaling-and-squaring.  Mass is conserved exactly
    in exact arithmetic, to round-off here.
    """
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    M = op.matrix
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) <= 1e-13 * (1.0 + scale):
        lam, Q = np.linalg.eigh(M)
        return Q @ (np.exp(t * lam) * (Q.T @ v))
    return scipy.linalg.expm(t * M) @ v


def kernel_degeneration_diagnostic(
    build, sizes,
) -> list[tuple[int, float]]:
    """Smallest nonzero singular value of the generator along a size sweep.

    ``build(N)`` must return an N x N rate table.  For families whose
    infinite limit has no equilibrium the reported gap drifts to zero as
    N grows; the caller interprets the trend, nothing is proved here.
    """
    out = []
    for n in sizes:
        M = sharpen(build(int(n))).matrix
        s = np.linalg.svd(M, compute_uv=False)
        nonzero = s[s > _KERNEL_RTOL * (s[0] if s.size else 0.0)]
        gap = float(nonzero.min()) if nonzero.size else 0.0
        out.append((int(n), gap))
    return out
