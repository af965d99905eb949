"""Transition-rate hierarchy for the driven system.

Three kernels describe population transfer at successively coarser
levels: the time-dependent rate ``psi_time_dependent`` (a finite-time
double Fourier sum), its long-time Cesaro average ``psi_averaged``, and
the resonance-restricted ``psi_dominant`` that keeps only the exactly
resonant modes.  ``split_AB`` separates the dominant kernel into a part
supported on zero-detuning pairs and a detuned part with its own power
of the small parameter, and ``regime_classify`` maps the exponent ratio
mu/p onto the reduction landscape (time-layer exponent, projector
choice, single-power approximate kernel when one exists).

Entry conventions follow the closed-form expressions: the kernel entry
(k, n) couples |V(n,k)|^2 with gamma(k,n), the gap omega(n,k), and the
detuning gap delta(k,n).  For real fields the mode sums are invariant
under flipping the sign of the multi-index, which makes the tables
symmetric whenever |V| and gamma are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .model import LevelSystem, QuasiPeriodicField, Scaling, pair_gaps

__all__ = [
    "ResonanceSet",
    "RegimeInfo",
    "resonance_set",
    "default_resonance_tolerance",
    "psi_time_dependent",
    "psi_time_series",
    "psi_averaged",
    "psi_dominant",
    "w_mod",
    "coupling_table",
    "split_AB",
    "b_limit",
    "regime_classify",
    "psi_app",
    "average_oracle",
]


@dataclass(frozen=True)
class ResonanceSet:
    """Per ordered level pair, the field modes that close the energy gap.

    ``pairs[(a, b)]`` lists multi-indices beta in the field support with
    omega(a,b) + beta.freq = 0 within the tolerance.  Flipping the pair
    negates the gap, so beta in pairs[(a,b)] iff -beta in pairs[(b,a)]
    for real fields.
    """

    pairs: dict[tuple[int, int], tuple[tuple[int, ...], ...]]
    tol: float

    def modes(self, a: int, b: int) -> tuple[tuple[int, ...], ...]:
        return self.pairs.get((a, b), ())


def default_resonance_tolerance(sys: LevelSystem, field: QuasiPeriodicField) -> float:
    gaps = np.abs(sys.omega_gaps())
    mode_freqs = np.abs(field.mode_frequencies())
    top = float(gaps.max()) if gaps.size else 0.0
    topf = float(mode_freqs.max()) if mode_freqs.size else 0.0
    return 1e-9 * (1.0 + top + topf)


def resonance_set(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    tol_res: float | None = None,
) -> ResonanceSet:
    """Collect all (pair, mode) exact resonances within tol_res.

    Configurations are expected to encode resonances exactly (integer or
    rational frequency content) so the tolerance is never load-bearing.
    """
    if tol_res is None:
        tol_res = default_resonance_tolerance(sys, field)
    if not tol_res > 0.0:
        raise ValueError(f"tol_res must be positive, got {tol_res}")
    gaps = sys.omega_gaps()
    n = sys.n_levels
    keys = [k for k, _ in field.modes()]
    dots = field.mode_frequencies()
    pairs: dict[tuple[int, int], tuple[tuple[int, ...], ...]] = {}
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            hit = tuple(
                keys[i] for i in range(len(keys)) if abs(gaps[a, b] + dots[i]) <= tol_res
            )
            if hit:
                pairs[(a, b)] = hit
    return ResonanceSet(pairs=pairs, tol=float(tol_res))


def _abs_v_sq(sys: LevelSystem) -> np.ndarray:
    return np.abs(sys.V) ** 2


def psi_time_series(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    s: np.ndarray,
) -> np.ndarray:
    """Time-dependent transition-rate tables at each time in s.

    Returns an array of shape (len(s), N, N) with entry (k, n) equal to

        2|V(n,k)|^2 Re[ f(s) * sum_b phi_b e^{i b.freq s} (1-e^{-z s})/z ],
        z = eps^mu gamma(k,n) + i (omega(k,n) + b.freq + eps^p delta(k,n)),

    which is the closed form of the truncated memory integral of the
    coupling correlation against the damped phase.  f(s) is the (real)
    field value.  Entries may be negative at finite s; only the Cesaro
    average is a rate table.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0.0):
        raise ValueError("times must be nonnegative")
    n = sys.n_levels
    eps, mu, p = scaling.eps, scaling.mu, scaling.p
    og = sys.omega_gaps()
    dg = sys.delta_gaps()
    v2 = _abs_v_sq(sys)

    amps = field._amp
    dots = field.mode_frequencies()
    fvals = np.real(np.exp(1j * np.outer(s, dots)) @ amps)  # field at s

    out = np.zeros((s.shape[0], n, n))
    if amps.size == 0:
        return out
    mode_phase = np.exp(1j * np.outer(s, dots))  # (n_s, n_modes)
    for k in range(n):
        for nn in range(n):
            if k == nn or v2[nn, k] == 0.0:
                continue
            z = eps**mu * sys.gamma[k, nn] + 1j * (og[k, nn] + dots + eps**p * dg[k, nn])
            kernel = (1.0 - np.exp(-np.outer(s, z))) / z  # (n_s, n_modes)
            inner = (mode_phase * kernel) @ amps
            out[:, k, nn] = 2.0 * v2[nn, k] * fvals * np.real(inner)
    return out


def psi_time_dependent(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    s: float,
) -> np.ndarray:
    """Single-time transition-rate table; see psi_time_series."""
    return psi_time_series(sys, field, scaling, np.array([float(s)]))[0]


def psi_averaged(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
) -> np.ndarray:
    """Long-time average of the time-dependent rates, in closed form.

    Entry (k, n) sums Lorentzian weights over the field modes:

        2|V(n,k)|^2 sum_b  eps^mu gamma(k,n) |phi_b|^2
                           / (eps^{2mu} gamma(k,n)^2
                              + (omega(n,k) + b.freq + eps^p delta(k,n))^2).

    Nonnegative with zero diagonal.  Note the index mix (gap omega(n,k)
    against detuning delta(k,n)); for real fields the mode sum is
    invariant under b -> -b, and when all detunings vanish both index
    readings coincide.
    """
    n = sys.n_levels
    eps, mu, p = scaling.eps, scaling.mu, scaling.p
    og = sys.omega_gaps()
    dg = sys.delta_gaps()
    v2 = _abs_v_sq(sys)
    gam = eps**mu * sys.gamma

    amps2 = np.abs(field._amp) ** 2
    dots = field.mode_frequencies()

    out = np.zeros((n, n))
    if amps2.size == 0:
        return out
    offdiag = ~np.eye(n, dtype=bool)
    for bf, a2 in zip(dots, amps2):
        shift = og.T + bf + eps**p * dg  # (k,n) entry: omega(n,k)+b.freq+eps^p delta(k,n)
        denom = gam**2 + shift**2
        out[offdiag] += a2 * gam[offdiag] / denom[offdiag]
    return 2.0 * v2.T * out


def psi_dominant(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    res: ResonanceSet,
) -> np.ndarray:
    """Resonant part of the averaged rates, one Lorentzian weight per pair.

    Entry (k, n) keeps only the exactly resonant modes of the pair:

        2|V(n,k)|^2 eps^mu gamma(k,n)
          / (eps^{2mu} gamma(k,n)^2 + eps^{2p} delta(k,n)^2)
          * sum of |phi_b|^2 over the resonance set of (k, n).

    Defined for mu > 0; at mu = 0 the averaged kernel itself is the
    order-one object and callers must use psi_averaged.
    """
    if scaling.mu == 0.0:
        raise ValueError("dominant rates are defined for mu > 0; use psi_averaged at mu = 0")
    n = sys.n_levels
    eps, mu, p = scaling.eps, scaling.mu, scaling.p
    dg = sys.delta_gaps()
    v2 = _abs_v_sq(sys)
    weight = _resonant_mode_mass(field, res, n)

    out = np.zeros((n, n))
    for k in range(n):
        for nn in range(n):
            if k == nn or weight[k, nn] == 0.0:
                continue
            g = sys.gamma[k, nn]
            out[k, nn] = (
                2.0 * v2[nn, k] * eps**mu * g
                / (eps ** (2 * mu) * g**2 + eps ** (2 * p) * dg[k, nn] ** 2)
                * weight[k, nn]
            )
    return out


def _resonant_mode_mass(
    field: QuasiPeriodicField, res: ResonanceSet, n: int
) -> np.ndarray:
    """Sum of |phi_b|^2 over the resonance set of each ordered pair."""
    out = np.zeros((n, n))
    for (a, b), betas in res.pairs.items():
        out[a, b] = sum(abs(field.coeffs[beta]) ** 2 for beta in betas)
    return out


def coupling_table(
    sys: LevelSystem, field: QuasiPeriodicField, res: ResonanceSet
) -> np.ndarray:
    """Resonant coupling strengths C(n,m) = 2|V(n,m)|^2 * resonant mode mass."""
    n = sys.n_levels
    return 2.0 * _abs_v_sq(sys) * _resonant_mode_mass(field, res, n)


def w_mod(sys: LevelSystem, psi_dom: np.ndarray) -> np.ndarray:
    """Modified transition rates: resonant kernel plus the bare rates."""
    if psi_dom.shape != sys.W.shape:
        raise ValueError(f"shape mismatch: {psi_dom.shape} vs {sys.W.shape}")
    return psi_dom + sys.W


def _delta_zero_mask(sys: LevelSystem) -> np.ndarray:
    dg = sys.delta_gaps()
    top = float(np.max(np.abs(dg))) if dg.size else 0.0
    tol_delta = 1e-12 * (1.0 + top)
    return np.abs(dg) <= tol_delta


def split_AB(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    res: ResonanceSet,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Split the dominant rates into resonant-undetuned and detuned parts.

    Returns (A, B_eps, nu) with the exact identity

        eps^{-mu} A + eps^{-nu} B_eps = psi_dominant.

    A collects pairs whose detuning gap vanishes, scaled so A is
    eps-independent; B_eps collects the rest and converges entrywise as
    eps -> 0.  The exponent nu is mu when mu <= p and 2p - mu otherwise
    (nonpositive nu simply means the detuned part is subdominant).
    """
    if scaling.mu == 0.0:
        raise ValueError("the splitting is defined for mu > 0")
    eps, mu, p = scaling.eps, scaling.mu, scaling.p
    C = coupling_table(sys, field, res)
    dz = _delta_zero_mask(sys)
    dg = sys.delta_gaps()
    n = sys.n_levels
    off = ~np.eye(n, dtype=bool)

    A = np.zeros((n, n))
    sel = dz & off & (C != 0.0)
    A[sel] = C[sel] / sys.gamma[sel]

    B = np.zeros((n, n))
    sel = ~dz & off & (C != 0.0)
    g, d = sys.gamma[sel], dg[sel]
    if mu <= p:
        nu = mu
        B[sel] = C[sel] * g / (g**2 + eps ** (2 * (p - mu)) * d**2)
    else:
        nu = 2 * p - mu
        B[sel] = C[sel] * g / (eps ** (2 * (mu - p)) * g**2 + d**2)
    return A, B, float(nu)


def b_limit(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    res: ResonanceSet,
) -> np.ndarray:
    """Limit B0 of the detuned part as eps -> 0 (same support as B_eps)."""
    mu, p = scaling.mu, scaling.p
    C = coupling_table(sys, field, res)
    dz = _delta_zero_mask(sys)
    dg = sys.delta_gaps()
    n = sys.n_levels
    sel = ~dz & ~np.eye(n, dtype=bool) & (C != 0.0)

    B0 = np.zeros((n, n))
    g, d = sys.gamma[sel], dg[sel]
    if mu < p:
        B0[sel] = C[sel] / g
    elif mu == p:
        B0[sel] = C[sel] * g / (g**2 + d**2)
    else:
        B0[sel] = C[sel] * g / d**2
    return B0


@dataclass(frozen=True)
class RegimeInfo:
    """Classification of the exponent pair (mu, p).

    In the finite-level classification sigma is the time-layer exponent
    (transversal components decay like exp(-c t eps^{-sigma}) and settle
    at size eps^sigma); in the infinite-level classification sigma is
    the power of 1/eps carried by the single-power approximate kernel.
    nu is the power attached to the detuned part of the splitting.
    projector names the subspace the slow dynamics lives on: 'pi' for
    the joint kernel of the two singular parts, 'pi_A' for the kernel of
    the undetuned part alone, 'none' when nothing is singular.  form
    names the approximate kernel when one exists; homogeneous is False
    when the classification refuses to reduce.
    """

    ratio: float
    sigma: float
    nu: float
    projector: str
    form: str | None
    homogeneous: bool
    finite_n: bool
    w_zero_required: bool
    difference: str
    notes: str = ""


def regime_classify(
    mu: float, p: float, finite_N: bool = True, W_zero: bool = False
) -> RegimeInfo:
    """Map (mu, p) to its reduction regime.

    The finite-level classification always succeeds and reports the
    layer exponent, the projector, and what changes relative to the
    undetuned problem.  The infinite-level classification reports a
    single-power approximate kernel only on the ratio windows where one
    exists (refusing on the gaps, and refusing when the bare rates W
    must vanish but do not).
    """
    if not (0.0 <= mu < 0.5):
        raise ValueError(f"mu must lie in [0, 1/2), got {mu}")
    if not p > 0.0:
        raise ValueError(f"p must be positive, got {p}")
    ratio = mu / p
    nu = mu if mu <= p else 2 * p - mu

    if finite_N:
        if ratio < 1.0:
            sigma, diff = mu, "none"
        elif ratio == 1.0:
            sigma, diff = mu, "transition rates"
        elif ratio < 2.0:
            sigma, diff = 2 * p - mu, "transition rates and time-layer"
        else:
            sigma, diff = mu, "projector and asymptotic state"
        projector = "none" if mu == 0.0 else ("pi" if ratio < 2.0 else "pi_A")
        return RegimeInfo(
            ratio=ratio, sigma=sigma, nu=nu, projector=projector, form=None,
            homogeneous=False, finite_n=True, w_zero_required=False,
            difference=diff,
            notes="finite-level classification; no single-power kernel claimed",
        )

    # infinite-level single-power windows
    if mu == 0.0:
        return RegimeInfo(
            ratio=0.0, sigma=0.0, nu=0.0, projector="none", form="inv_gamma",
            homogeneous=True, finite_n=False, w_zero_required=False,
            difference="none",
            notes="order-one kernel: all-mode Lorentzian weights (nominal tag inv_gamma)",
        )
    w_required = False
    if ratio < 2.0 / 3.0:
        sigma, form, w_required = mu, "inv_gamma", True
    elif ratio < 1.0:
        return _no_reduction(ratio, nu, "ratio in the gap [2/3, 1)")
    elif ratio == 1.0:
        sigma, form, w_required = mu, "lorentz", True
    elif ratio <= 4.0 / 3.0:
        return _no_reduction(ratio, nu, "ratio in the gap (1, 4/3]")
    elif ratio < 2.0:
        sigma, form, w_required = 2 * p - mu, "gamma_over_delta_sq", True
    elif ratio == 2.0:
        sigma, form = 0.0, "gamma_over_delta_sq"
    else:
        sigma, form = 0.0, "zero"

    if w_required and not W_zero:
        return _no_reduction(
            ratio, nu, "bare rates W must vanish for this single-power window"
        )
    projector = "pi" if ratio < 2.0 else "pi_A"
    notes = ""
    if form == "gamma_over_delta_sq":
        notes = "requires every resonant pair to carry a nonzero detuning gap"
    return RegimeInfo(
        ratio=ratio, sigma=sigma, nu=nu, projector=projector, form=form,
        homogeneous=True, finite_n=False, w_zero_required=w_required,
        difference="", notes=notes,
    )


def _no_reduction(ratio: float, nu: float, why: str) -> RegimeInfo:
    return RegimeInfo(
        ratio=ratio, sigma=float("nan"), nu=nu, projector="none", form=None,
        homogeneous=False, finite_n=False, w_zero_required=False,
        difference="", notes=f"no homogeneous reduction: {why}",
    )


def psi_app(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    res: ResonanceSet,
    regime: RegimeInfo,
) -> np.ndarray:
    """Single-power approximate kernel for a homogeneous regime.

    At mu = 0 every field mode contributes a Lorentzian weight; for
    mu > 0 the resonant coupling strengths are rescaled by the regime's
    form (1/gamma, gamma/(gamma^2+delta^2), gamma/delta^2, or zero).
    """
    if not regime.homogeneous:
        raise ValueError(f"regime admits no homogeneous reduction ({regime.notes})")
    n = sys.n_levels
    off = ~np.eye(n, dtype=bool)

    if regime.ratio == 0.0:
        og = sys.omega_gaps()
        v2 = _abs_v_sq(sys)
        amps2 = np.abs(field._amp) ** 2
        dots = field.mode_frequencies()
        out = np.zeros((n, n))
        for bf, a2 in zip(dots, amps2):
            shift = og.T + bf
            out[off] += a2 * sys.gamma[off] / (sys.gamma[off] ** 2 + shift[off] ** 2)
        return 2.0 * v2.T * out

    C = coupling_table(sys, field, res)
    if regime.form == "zero":
        return np.zeros((n, n))
    out = np.zeros((n, n))
    sel = off & (C != 0.0)
    if regime.form == "inv_gamma":
        out[sel] = C[sel] / sys.gamma[sel]
    elif regime.form == "lorentz":
        dg = sys.delta_gaps()
        out[sel] = C[sel] * sys.gamma[sel] / (sys.gamma[sel] ** 2 + dg[sel] ** 2)
    elif regime.form == "gamma_over_delta_sq":
        dg = sys.delta_gaps()
        if np.any(_delta_zero_mask(sys) & sel):
            raise ValueError("resonant pair with zero detuning gap: gamma/delta^2 form is invalid here")
        out[sel] = C[sel] * sys.gamma[sel] / dg[sel] ** 2
    else:
        raise ValueError(f"unknown kernel form {regime.form!r}")
    return out


def average_oracle(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling: Scaling,
    S: float,
    quad_steps: int,
) -> np.ndarray:
    """Finite-horizon Cesaro average (1/S) int_0^S psi_time_dependent ds.

    Composite Simpson quadrature on a uniform grid; an independent check
    of the closed-form psi_averaged, which it approaches at rate O(1/S).
    """
    if not S > 0.0:
        raise ValueError(f"horizon must be positive, got {S}")
    steps = int(quad_steps)
    if steps < 2:
        raise ValueError("need at least 2 quadrature steps")
    if steps % 2:
        steps += 1  # Simpson needs an even interval count
    grid = np.linspace(0.0, S, steps + 1)
    vals = psi_time_series(sys, field, scaling, grid)
    return scipy.integrate.simpson(vals, x=grid, axis=0) / S
