"""Small-divisor diagnostics: scans, perturbed margins, genericity.

Everything here quantifies over finite ranges (level pairs of the given
system, multi-indices up to a search bound) because the underlying
conditions quantify over infinite sets; the bound travels with every
report so nothing is silently extrapolated.  Multi-index size |a| is
the l1 norm, level indices enter the weights 1-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import LevelSystem, QuasiPeriodicField
from .rates import default_resonance_tolerance

__all__ = [
    "DiophParams",
    "DiophReport",
    "SpeedReport",
    "GenericityTable",
    "check_dioph",
    "check_speed",
    "estimate_C_eta",
    "perturbed_violations",
    "perturbed_threshold",
    "genericity_experiment",
]


@dataclass(frozen=True)
class DiophParams:
    """Parameters of the small-divisor scans.

    C_eta defaults to the scan estimate when unset; B_max to ten times
    the field's support bound.  N_eta and K are carried for the decay
    hypotheses of truncation studies and are not used by the scans.
    """

    eta: float = 0.1
    C_eta: float | None = None
    N_eta: float | None = None
    K: float | None = None
    B_max: int | None = None

    def __post_init__(self) -> None:
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    def resolve_b_max(self, field: QuasiPeriodicField) -> int:
        if self.B_max is not None:
            return int(self.B_max)
        return 10 * max(1, field.support_bound())


def _multi_indices(r: int, b_max: int) -> np.ndarray:
    """All nonzero integer multi-indices with l1 norm at most b_max."""
    rng = range(-b_max, b_max + 1)
    out = [
        a for a in itertools.product(rng, repeat=r)
        if 0 < sum(abs(x) for x in a) <= b_max
    ]
    return np.array(out, dtype=int).reshape(len(out), r)


def _alpha_weight(alpha: np.ndarray, r: int, eta: float) -> np.ndarray:
    return (1.0 + np.abs(alpha).sum(axis=-1)) ** (r - 1 + eta)


def _pair_weight(n: int, k: int, eta: float) -> float:
    # level indices are 1-based inside the weights
    return ((2.0 + n) * (2.0 + k)) ** (1.0 + eta)


@dataclass(frozen=True)
class DiophReport:
    margin_combined: float                       # min weighted margin, gap condition
    witness_combined: tuple | None               # (alpha, n, k) achieving it
    margin_pure: float                           # min weighted margin, frequency-only condition
    witness_pure: tuple | None                   # alpha achieving it
    n_scanned: int
    n_resonant_excluded: int
    b_max: int
    eta: float

    def satisfied(self, c_eta: float) -> bool:
        return min(self.margin_combined, self.margin_pure) >= c_eta


def check_dioph(
    sys: LevelSystem, field: QuasiPeriodicField, params: DiophParams
) -> DiophReport:
    """Scan the weighted small-divisor margins of the system and field.

    The combined condition asks |a.freq + omega(n,k)| to beat
    C / ((1+|a|)^(r-1+eta) (1+n)^(1+eta) (1+k)^(1+eta)) for every
    nonzero multi-index and level pair; exact resonances are excluded
    (and counted).  The pure condition drops the level pair.  The report
    carries the smallest weighted margins and their witnesses.
    """
    b_max = params.resolve_b_max(field)
    eta = params.eta
    r = field.r
    alphas = _multi_indices(r, b_max)
    tol = default_resonance_tolerance(sys, field)
    gaps = sys.omega_gaps()
    n = sys.n_levels

    margin_c, witness_c = math.inf, None
    margin_p, witness_p = math.inf, None
    scanned = 0
    excluded = 0

    if alphas.size:
        dots = alphas @ field.freq
        aw = _alpha_weight(alphas, r, eta)
        for i in range(alphas.shape[0]):
            m = abs(dots[i]) * aw[i]
            scanned += 1
            if m < margin_p:
                margin_p, witness_p = float(m), tuple(int(x) for x in alphas[i])
        for a in range(n):
            for b in range(n):
                vals = np.abs(dots + gaps[a, b])
                res = vals <= tol
                excluded += int(res.sum())
                keep = ~res
                if not np.any(keep):
                    continue
                scanned += int(keep.sum())
                margins = vals[keep] * aw[keep] * _pair_weight(a, b, eta)
                j = int(np.argmin(margins))
                if margins[j] < margin_c:
                    idx = np.flatnonzero(keep)[j]
                    margin_c = float(margins[j])
                    witness_c = (tuple(int(x) for x in alphas[idx]), a, b)

    return DiophReport(
        margin_combined=margin_c,
        witness_combined=witness_c,
        margin_pure=margin_p,
        witness_pure=witness_p,
        n_scanned=scanned,
        n_resonant_excluded=excluded,
        b_max=b_max,
        eta=eta,
    )


@dataclass(frozen=True)
class SpeedReport:
    margin: float                 # inf when no pair qualifies
    witness: tuple[int, int] | None
    n_pairs: int
    note: str = ""


def check_speed(sys: LevelSystem, params: DiophParams) -> SpeedReport:
    """Weighted lower bound on the nonzero energy gaps.

    Degenerate pairs (zero gap) are excluded; a single level or fully
    degenerate spectrum reports an infinite margin with a note.
    """
    eta = params.eta
    gaps = sys.omega_gaps()
    n = sys.n_levels
    margin, witness, count = math.inf, None, 0
    for a in range(n):
        for b in range(n):
            if a == b or gaps[a, b] == 0.0:
                continue
            count += 1
            m = abs(gaps[a, b]) * _pair_weight(a, b, eta)
            if m < margin:
                margin, witness = float(m), (a, b)
    note = "" if count else "no pairs with a nonzero gap"
    return SpeedReport(margin=margin, witness=witness, n_pairs=count, note=note)


def estimate_C_eta(
    sys: LevelSystem, field: QuasiPeriodicField, eta: float, b_max: int
) -> float:
    """Largest constant the scanned range supports: the minimum margin.

    Range-relative by construction; +inf when nothing non-resonant was
    scanned.  Shrinking the level set or the index bound can only raise
    the estimate (min over fewer terms).
    """
    params = DiophParams(eta=eta, B_max=b_max)
    rep = check_dioph(sys, field, params)
    speed = check_speed(sys, params)
    return min(rep.margin_combined, rep.margin_pure, speed.margin)


def _perturbed_scan(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling,
    params: DiophParams,
):
    """Shared scan for perturbed_violations and perturbed_threshold."""
    b_max = params.resolve_b_max(field)
    eta = params.eta
    r = field.r
    c_eta = params.C_eta
    if c_eta is None:
        c_eta = estimate_C_eta(sys, field, eta, b_max)
    tol = default_resonance_tolerance(sys, field)
    gaps = sys.omega_gaps()
    dgaps = sys.delta_gaps()
    n = sys.n_levels

    betas = _multi_indices(r, b_max)
    zero = np.zeros((1, r), dtype=int)
    betas = np.vstack([zero, betas]) if betas.size else zero
    dots = betas @ field.freq
    bw = _alpha_weight(betas, r, eta)
    rows = []
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            weights = bw * _pair_weight(a, b, eta)
            combo = dots + gaps[a, b]
            keep = np.abs(combo) > tol  # the unperturbed condition only covers non-resonant combos
            for i in np.flatnonzero(keep):
                rows.append((a, b, tuple(int(x) for x in betas[i]),
                             float(combo[i]), float(weights[i])))
    return rows, c_eta, dgaps


def perturbed_violations(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling,
    params: DiophParams,
) -> list[tuple[int, int, tuple[int, ...]]]:
    """Triples whose detuned divisor dips below half the unperturbed bound.

    Scans all non-resonant (n, k, beta) in range for

        |beta.freq + omega(n,k) + eps^p delta(n,k)| <= (C/2) / weights

    and returns them sorted.  Every returned triple must carry a large
    weight, at least C eps^{-p} / (2 max|delta gap|): the detuning can
    only disturb combinations that were barely non-resonant to begin
    with.  With no detuning at all nothing is perturbed and the list is
    empty.
    """
    eps, p = scaling.eps, scaling.p
    rows, c_eta, dgaps = _perturbed_scan(sys, field, scaling, params)
    dmax = float(np.max(np.abs(dgaps)))
    if dmax == 0.0:
        return []

    out = []
    bound = c_eta * eps ** (-p) / (2.0 * dmax)
    for a, b, beta, combo, weight in rows:
        lhs = abs(combo + eps**p * dgaps[a, b])
        if lhs <= 0.5 * c_eta / weight:
            if weight < bound * (1.0 - 1e-12):
                raise AssertionError(
                    f"witness ({a},{b},{beta}) has weight {weight:.6e} below the "
                    f"size bound {bound:.6e}"
                )
            out.append((a, b, beta))
    out.sort()
    return out


def perturbed_threshold(
    sys: LevelSystem,
    field: QuasiPeriodicField,
    scaling,
    params: DiophParams,
) -> float:
    """Largest eps below which the perturbed scan is guaranteed empty.

    For each scanned triple the divisor can only enter the window once
    eps^p |delta gap| reaches the distance between the unperturbed value
    and the window edge; the minimum over triples gives the threshold.
    """
    p = scaling.p
    rows, c_eta, dgaps = _perturbed_scan(sys, field, scaling, params)
    best = math.inf
    for a, b, beta, combo, weight in rows:
        d = abs(dgaps[a, b])
        if d == 0.0:
            continue
        slack = abs(combo) - 0.5 * c_eta / weight
        if slack <= 0.0:
            return 0.0
        best = min(best, (slack / d) ** (1.0 / p))
    return best


@dataclass(frozen=True)
class GenericityTable:
    c_values: tuple[float, ...]
    fractions: tuple[float, ...]
    n_samples: int
    b_max: int

    def rows(self) -> list[tuple[float, float, int]]:
        return [
            (c, f, self.n_samples) for c, f in zip(self.c_values, self.fractions)
        ]


def genericity_experiment(
    r: int,
    ball_radius: float,
    eta: float,
    omegas,
    n_samples: int,
    c_grid,
    seed: int,
    b_max: int = 8,
) -> GenericityTable:
    """Measure how rarely random frequency vectors violate the margins.

    Samples frequency vectors uniformly in the r-ball and, for each
    constant c in the grid, reports the fraction of samples for which
    some scanned combination (multi-index alone, or multi-index plus a
    gap of the supplied level energies) has weighted margin strictly
    below c.  The violation sets are nested in c, so the fractions are
    nondecreasing, and the underlying measure bound is linear in c.
    """
    if n_samples < 100:
        raise ValueError(f"need at least 100 samples, got {n_samples}")
    if not ball_radius > 0.0:
        raise ValueError(f"ball radius must be positive, got {ball_radius}")
    c_grid = np.asarray(list(c_grid), dtype=float)
    if c_grid.size == 0:
        raise ValueError("empty c grid")
    omegas = np.asarray(list(omegas), dtype=float)

    alphas = _multi_indices(r, b_max)
    aw = _alpha_weight(alphas, r, eta)
    gaps = [0.0]
    weights = [aw]
    n_lev = omegas.size
    for a in range(n_lev):
        for b in range(n_lev):
            gaps.append(omegas[a] - omegas[b])
            weights.append(aw * _pair_weight(a, b, eta))
    gap_arr = np.array(gaps)                     # (n_rows,)
    weight_arr = np.stack(weights, axis=0)       # (n_rows, n_alpha)

    rng = np.random.default_rng(seed)
    fractions = np.zeros(c_grid.size)
    done = 0
    chunk = max(1, min(2000, n_samples))
    while done < n_samples:
        m = min(chunk, n_samples - done)
        # uniform in the r-ball: direction times radius^(1/r)-scaled magnitude
        x = rng.standard_normal((m, r))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        radii = ball_radius * rng.random(m) ** (1.0 / r)
        samples = x * radii[:, None]

        dots = samples @ alphas.T                                  # (m, n_alpha)
        vals = np.abs(dots[:, None, :] + gap_arr[None, :, None])   # (m, n_rows, n_alpha)
        margins = (vals * weight_arr[None, :, :]).min(axis=(1, 2))
        fractions += (margins[:, None] < c_grid[None, :]).sum(axis=0)
        done += m

    fractions /= n_samples
    return GenericityTable(
        c_values=tuple(float(c) for c in c_grid),
        fractions=tuple(float(f) for f in fractions),
        n_samples=int(n_samples),
        b_max=int(b_max),
    )
