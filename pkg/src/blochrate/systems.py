"""Ready-made level systems, random instances, and truncation families."""

from __future__ import annotations

import math

import numpy as np

from .model import LevelSystem, QuasiPeriodicField
from .rate_solver import LevelFamily

__all__ = [
    "monochromatic_field",
    "two_tone_field",
    "two_level_resonant",
    "two_level_detuned",
    "three_level_thermal",
    "layered_three_level",
    "random_system",
    "geometric_family",
    "resonant_polynomial_family",
    "PRESETS",
]

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def _width_sum_gamma(widths) -> np.ndarray:
    """Dephasing table gamma(n,m) = (c_n + c_m)/2 from per-level widths.

    This profile keeps the off-diagonal damping completely positive
    (the entrywise decay factor splits as u u^T plus a nonnegative
    diagonal), so populations of the evolved state never go negative.
    """
    c = np.asarray(widths, dtype=float)
    g = 0.5 * (c[:, None] + c[None, :])
    np.fill_diagonal(g, 0.0)
    return g


def monochromatic_field(freq: float = 1.0, amplitude: complex = 1.0) -> QuasiPeriodicField:
    """Single-frequency real wave 2 Re(amplitude e^{i freq s})."""
    a = complex(amplitude)
    return QuasiPeriodicField(freq=(float(freq),), coeffs={(1,): a, (-1,): a.conjugate()})


def two_tone_field(
    freq: tuple[float, float] = (1.0, GOLDEN),
    amplitudes: tuple[complex, complex] = (1.0, 0.5),
) -> QuasiPeriodicField:
    """Two incommensurate tones, one coefficient pair per tone."""
    a1, a2 = (complex(a) for a in amplitudes)
    coeffs = {
        (1, 0): a1,
        (-1, 0): a1.conjugate(),
        (0, 1): a2,
        (0, -1): a2.conjugate(),
    }
    return QuasiPeriodicField(freq=(float(freq[0]), float(freq[1])), coeffs=coeffs)


def two_level_resonant() -> tuple[LevelSystem, QuasiPeriodicField]:
    """Two levels exactly one wave quantum apart, no detuning, no bare rates."""
    sys = LevelSystem(
        omega=[0.0, 1.0],
        delta=[0.0, 0.0],
        gamma=_width_sum_gamma([1.0, 1.0]),
        W=np.zeros((2, 2)),
        V=[[0.0, 1.0], [1.0, 0.0]],
    )
    return sys, monochromatic_field()


def two_level_detuned(detuning: float = 1.0) -> tuple[LevelSystem, QuasiPeriodicField]:
    """The resonant pair with an order-eps^p energy shift on the upper level."""
    base, field = two_level_resonant()
    sys = LevelSystem(
        omega=base.omega,
        delta=[0.0, float(detuning)],
        gamma=base.gamma,
        W=base.W,
        V=base.V,
    )
    return sys, field


def three_level_thermal(temperature: float = 1.0) -> LevelSystem:
    """Unit ladder with nearest-neighbour rates in detailed balance at T.

    Downhill rates are 1, uphill rates carry the Boltzmann factor, so the
    stationary state is the Gibbs distribution.
    """
    t = float(temperature)
    if t <= 0.0:
        raise ValueError(f"temperature must be positive, got {t}")
    up = math.exp(-1.0 / t)
    W = np.array(
        [
            [0.0, up, 0.0],
            [1.0, 0.0, up],
            [0.0, 1.0, 0.0],
        ]
    )
    return LevelSystem(
        omega=[0.0, 1.0, 2.0],
        delta=[0.0, 0.0, 0.0],
        gamma=_width_sum_gamma([1.0, 1.0, 1.0]),
        W=W,
        V=np.zeros((3, 3)),
        temperature=t,
    )


def layered_three_level(
    w_up: float = 0.5, w_down: float = 0.25
) -> tuple[LevelSystem, QuasiPeriodicField]:
    """Two resonant pairs, one clean and one detuned, plus slow bare rates.

    Levels 1 and 2 sit one wave quantum above level 0; level 2 carries a
    unit detuning.  The wave couples level 0 to both others, so the
    splitting of the averaged rates puts the (0,1) pair in the clean table
    and the (0,2) pair in the detuned one.  The bare rates exchange the
    upper levels asymmetrically, which keeps pushing the populations off
    the fast-relaxation kernel and makes the transversal plateau visible.
    """
    sys = LevelSystem(
        omega=[0.0, 1.0, 1.0],
        delta=[0.0, 0.0, 1.0],
        gamma=_width_sum_gamma([1.0, 1.0, 1.0]),
        W=[[0.0, 0.0, 0.0], [0.0, 0.0, float(w_up)], [0.0, float(w_down), 0.0]],
        V=[[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
    )
    return sys, monochromatic_field()


def random_system(
    rng: np.random.Generator,
    n_levels: int | None = None,
    resonant: bool = True,
    with_bare_rates: bool = True,
) -> tuple[LevelSystem, QuasiPeriodicField]:
    """Draw a valid system plus a compatible single-frequency wave.

    The dephasing table uses the width-sum profile so positivity of the
    populations is a theorem rather than an accident of the draw; when
    ``resonant`` one energy gap is snapped to the wave frequency.
    """
    n = int(n_levels) if n_levels is not None else int(rng.integers(2, 7))
    if n < 2:
        raise ValueError(f"need at least 2 levels, got {n}")
    gaps = rng.uniform(0.3, 1.7, size=n - 1)
    if resonant:
        gaps[int(rng.integers(0, n - 1))] = 1.0
    omega = np.concatenate([[0.0], np.cumsum(gaps)])

    delta = np.where(rng.random(n) < 0.5, rng.uniform(-1.0, 1.0, size=n), 0.0)
    gamma = _width_sum_gamma(rng.uniform(0.5, 1.5, size=n))

    W = np.zeros((n, n))
    if with_bare_rates:
        W = rng.uniform(0.0, 1.0, size=(n, n)) * (rng.random((n, n)) < 0.4)
        np.fill_diagonal(W, 0.0)

    raw = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    V = 0.5 * (raw + raw.conj().T)

    amp = complex(rng.normal(), rng.normal())
    field = QuasiPeriodicField(freq=(1.0,), coeffs={(1,): amp, (-1,): amp.conjugate()})
    sys = LevelSystem(omega=omega, delta=delta, gamma=gamma, W=W, V=V)
    return sys, field


def geometric_family(
    coupling_ratio: float = 0.5,
    head: int = 3,
    population_ratio: float = 0.6,
) -> LevelFamily:
    """Wave-resonant head levels over a silent geometric tail.

    The first ``head`` levels form a unit ladder resonant with the wave;
    beyond them the spacing is sqrt(2), so no tail gap ever matches a
    wave combination.  Couplings and bare rates decay geometrically.
    """
    if not 0.0 < coupling_ratio < 1.0:
        raise ValueError(f"coupling_ratio must lie in (0,1), got {coupling_ratio}")
    if head < 2:
        raise ValueError(f"head must cover at least one gap, got {head}")
    q = float(coupling_ratio)
    g = float(population_ratio)
    root2 = math.sqrt(2.0)
    field = monochromatic_field()

    def build(n: int) -> LevelSystem:
        idx = np.arange(n, dtype=float)
        omega = np.where(idx < head, idx, (head - 1) + (idx - head + 1) * root2)
        scale = q ** (idx[:, None] + idx[None, :])
        V = np.sqrt(scale)
        np.fill_diagonal(V, 0.0)
        W = 0.3 * scale
        np.fill_diagonal(W, 0.0)
        return LevelSystem(
            omega=omega,
            delta=np.zeros(n),
            gamma=_width_sum_gamma(np.ones(n)),
            W=W,
            V=V,
        )

    def rho0(n: int) -> np.ndarray:
        return (1.0 - g) * g ** np.arange(n, dtype=float)

    return LevelFamily(system=build, rho0=rho0, field=field)


def resonant_polynomial_family(
    coupling_power: float = 0.75,
    population_power: float = 4.0,
) -> LevelFamily:
    """Integer ladder resonant at every level, polynomially decaying couplings.

    Every adjacent gap equals the wave frequency, so the resonant kernel
    reaches arbitrarily high levels and the truncation size must grow as
    eps shrinks.
    """
    s = float(coupling_power)
    r = float(population_power)
    field = monochromatic_field()

    def build(n: int) -> LevelSystem:
        idx = np.arange(n, dtype=float)
        V = ((1.0 + idx[:, None]) * (1.0 + idx[None, :])) ** (-s)
        np.fill_diagonal(V, 0.0)
        return LevelSystem(
            omega=idx,
            delta=np.zeros(n),
            gamma=_width_sum_gamma(np.ones(n)),
            W=np.zeros((n, n)),
            V=V,
        )

    def rho0(n: int) -> np.ndarray:
        return (1.0 + np.arange(n, dtype=float)) ** (-r)

    return LevelFamily(system=build, rho0=rho0, field=field)


def _preset_two_level_resonant():
    return two_level_resonant()


def _preset_two_level_detuned():
    return two_level_detuned()


def _preset_three_level_thermal():
    return three_level_thermal(), None


def _preset_layered_three_level():
    return layered_three_level()


PRESETS = {
    "two-level-resonant": _preset_two_level_resonant,
    "two-level-detuned": _preset_two_level_detuned,
    "three-level-thermal": _preset_three_level_thermal,
    "layered-three-level": _preset_layered_three_level,
}
