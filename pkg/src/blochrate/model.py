"""Data model for driven multilevel systems with weak dissipation.

A :class:`LevelSystem` bundles the static data of an N-level problem:
level energies, their small detunings, coherence damping coefficients,
population transition rates, and a Hermitian coupling operator.  A
:class:`QuasiPeriodicField` is a real trigonometric polynomial driving
the coupling, and :class:`Scaling` carries the small parameter together
with the two exponents that set the dissipation and detuning strengths.

Matrices are plain numpy arrays indexed from 0; pair quantities follow
the convention ``gap(n, m) = value(n) - value(m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LevelSystem",
    "QuasiPeriodicField",
    "Scaling",
    "ValidationReport",
    "pair_gaps",
    "validate_system",
    "well_prepared_state",
    "field_value",
    "hermiticity_tolerance",
]


def pair_gaps(values: np.ndarray) -> np.ndarray:
    """Antisymmetric difference table ``G[n, m] = values[n] - values[m]``."""
    v = np.asarray(values, dtype=float)
    return v[:, None] - v[None, :]


def hermiticity_tolerance(a: np.ndarray) -> float:
    """Absolute tolerance used when a matrix is required to be Hermitian."""
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    return 1e-10 * (1.0 + scale)


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class LevelSystem:
    """Static data of an N-level system.

    omega        level energies, shape (N,)
    delta        detunings added to energy gaps at relative order eps**p
    gamma        symmetric coherence damping table, zero diagonal,
                 strictly positive off the diagonal
    W            population transition rates, W[n, m] = rate n -> m,
                 nonnegative with zero diagonal
    V            Hermitian coupling operator
    temperature  optional; when set, W is expected to satisfy
                 microreversibility against omega at this temperature
    """

    omega: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    W: np.ndarray
    V: np.ndarray
    temperature: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", _readonly(np.asarray(self.omega, dtype=float)))
        object.__setattr__(self, "delta", _readonly(np.asarray(self.delta, dtype=float)))
        object.__setattr__(self, "gamma", _readonly(np.asarray(self.gamma, dtype=float)))
        object.__setattr__(self, "W", _readonly(np.asarray(self.W, dtype=float)))
        object.__setattr__(self, "V", _readonly(np.asarray(self.V, dtype=complex)))

    @property
    def n_levels(self) -> int:
        return self.omega.shape[0]

    def omega_gaps(self) -> np.ndarray:
        """Energy gap table omega(n) - omega(m)."""
        return pair_gaps(self.omega)

    def delta_gaps(self) -> np.ndarray:
        """Detuning gap table delta(n) - delta(m)."""
        return pair_gaps(self.delta)


@dataclass(frozen=True, eq=False)
class QuasiPeriodicField:
    """Real trigonometric polynomial t -> sum_a coeffs[a] * exp(i a.freq t).

    ``freq`` is the frequency vector (length r); ``coeffs`` maps integer
    multi-indices of length r to complex amplitudes.  Realness requires
    coeffs[-a] == conj(coeffs[a]) for every mode, which is checked at
    construction.  The zero multi-index is allowed (a constant offset).
    """

    freq: np.ndarray
    coeffs: dict[tuple[int, ...], complex]
    _alpha: np.ndarray = field(init=False, repr=False)
    _amp: np.ndarray = field(init=False, repr=False)
    _alpha_dot_freq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        freq = _readonly(np.asarray(self.freq, dtype=float))
        object.__setattr__(self, "freq", freq)
        r = freq.shape[0]
        norm = {}
        for key, val in self.coeffs.items():
            tkey = tuple(int(k) for k in key)
            if len(tkey) != r:
                raise ValueError(f"multi-index {tkey} has length {len(tkey)}, expected {r}")
            norm[tkey] = complex(val)
        object.__setattr__(self, "coeffs", norm)
        total = sum(abs(v) for v in norm.values())
        tol = 1e-12 * total
        for key, val in norm.items():
            mirror = tuple(-k for k in key)
            if abs(norm.get(mirror, 0.0) - val.conjugate()) > tol:
                raise ValueError(f"field is not real: coeff at {mirror} must conjugate coeff at {key}")
        # sorted mode order keeps every downstream evaluation deterministic
        keys = sorted(norm)
        alpha = np.array(keys, dtype=float).reshape(len(keys), r)
        amp = np.array([norm[k] for k in keys], dtype=complex)
        object.__setattr__(self, "_alpha", _readonly(alpha))
        object.__setattr__(self, "_amp", _readonly(amp))
        object.__setattr__(self, "_alpha_dot_freq", _readonly(alpha @ freq))

    @property
    def r(self) -> int:
        return self.freq.shape[0]

    def modes(self) -> list[tuple[tuple[int, ...], complex]]:
        """Modes in sorted multi-index order."""
        return [(k, self.coeffs[k]) for k in sorted(self.coeffs)]

    def support_bound(self) -> int:
        """Largest l1 norm of a multi-index in the support."""
        if not self.coeffs:
            return 0
        return max(sum(abs(k) for k in key) for key in self.coeffs)

    def mode_frequencies(self) -> np.ndarray:
        """alpha . freq for each mode, in sorted multi-index order."""
        return self._alpha_dot_freq


def field_value(fld: QuasiPeriodicField, t: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the field at time t (scalar or array).

    The imaginary part of the mode sum is below 1e-12 times the total
    coefficient mass by the realness invariant; the real part is returned.
    """
    t = np.asarray(t, dtype=float)
    phases = np.exp(1j * np.multiply.outer(t, fld._alpha_dot_freq))
    out = np.real(phases @ fld._amp)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Scaling:
    """Small parameter eps with dissipation exponent mu and detuning exponent p."""

    eps: float
    mu: float
    p: float

    def __post_init__(self) -> None:
        if not (0.0 < self.eps <= 1.0):
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if not (0.0 <= self.mu < 0.5):
            raise ValueError(f"mu must lie in [0, 1/2), got {self.mu}")
        if not self.p > 0.0:
            raise ValueError(f"p must be positive, got {self.p}")

    @property
    def ratio(self) -> float:
        return self.mu / self.p


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_system(sys: LevelSystem) -> ValidationReport:
    """Check every structural invariant of a level system.

    Returns a report listing one message per violated invariant; an empty
    list means the system is valid.  When ``temperature`` is set the
    transition rates must balance the Gibbs weights:
    W[n, m] * exp(-omega[n]/T) == W[m, n] * exp(-omega[m]/T).
    """
    bad: list[str] = []
    n = sys.omega.shape[0]

    def shape_ok(a: np.ndarray, name: str, want: tuple[int, ...]) -> bool:
        if a.shape != want:
            bad.append(f"{name} has shape {a.shape}, expected {want}")
            return False
        return True

    shape_ok(sys.delta, "delta", (n,))
    sq = all(
        shape_ok(getattr(sys, name), name, (n, n)) for name in ("gamma", "W", "V")
    )
    for name in ("omega", "delta", "gamma", "W", "V"):
        arr = getattr(sys, name)
        if arr.size and not np.all(np.isfinite(arr.view(float))):
            bad.append(f"{name} contains non-finite entries")
    if not sq:
        return ValidationReport(tuple(bad))

    g = sys.gamma
    if np.max(np.abs(g - g.T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(g), initial=0.0)):
        bad.append("gamma is not symmetric")
    if np.any(np.abs(np.diag(g)) > 0.0):
        bad.append("gamma has nonzero diagonal entries")
    off = ~np.eye(n, dtype=bool)
    if n > 1 and not np.all(g[off] > 0.0):
        bad.append("gamma must be strictly positive off the diagonal")

    if np.max(np.abs(sys.V - sys.V.conj().T), initial=0.0) > hermiticity_tolerance(sys.V):
        bad.append("V is not Hermitian")

    if np.any(sys.W < 0.0):
        bad.append("W has negative entries")
    if np.any(np.abs(np.diag(sys.W)) > 0.0):
        bad.append("W has nonzero diagonal entries")

    if sys.temperature is not None:
        T = sys.temperature
        if not T > 0.0:
            bad.append(f"temperature must be positive, got {T}")
        else:
            # microreversibility: the Gibbs state is flow-balanced pairwise
            gibbs = np.exp(-(sys.omega - np.min(sys.omega)) / T)
            resid = np.max(np.abs(sys.W * gibbs[:, None] - sys.W.T * gibbs[None, :]), initial=0.0)
            if resid > 1e-10 * (1.0 + np.max(sys.W, initial=0.0)):
                bad.append(f"W violates microreversibility at T={T} (residual {resid:.3e})")

    return ValidationReport(tuple(bad))


def well_prepared_state(populations: np.ndarray) -> np.ndarray:
    """Diagonal density matrix with the given nonnegative populations."""
    pop = np.asarray(populations, dtype=float)
    if np.any(pop < 0.0):
        raise ValueError("populations must be nonnegative")
    return np.diag(pop.astype(complex))
