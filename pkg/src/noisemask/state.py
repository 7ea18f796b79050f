"""Second-moment description of the per-mode quadrature statistics.

Variances are normalized so that vacuum (and any coherent state) has unit
quadrature variance.  Each spatial mode carries a 2x2 covariance between
the measured quadratures of beams a and b; distinct modes are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class ModeNoise:
    var_a: float
    var_b: float
    cross: float

    def __post_init__(self):
        if self.var_a < 0 or self.var_b < 0:
            raise InvalidArgument(f"variances must be non-negative: {self}")
        if self.cross**2 > self.var_a * self.var_b * (1 + 1e-12) + 1e-15:
            raise InvalidArgument(f"unphysical correlation, cross^2 > var_a*var_b: {self}")

    @property
    def m0(self) -> float:
        """Normalized noise of the quadrature difference X_a - X_b."""
        return 0.5 * (self.var_a + self.var_b - 2.0 * self.cross)

    def block(self) -> np.ndarray:
        return np.array([[self.var_a, self.cross], [self.cross, self.var_b]])


VACUUM = ModeNoise(1.0, 1.0, 0.0)


@dataclass(frozen=True)
class TwinBeam:
    """Two-mode squeezed pair: single-beam noise ``var``, difference noise ``m0``.

    The correlation follows the sum of the two measured quadrature angles
    and is largest when that sum vanishes.
    """

    var: float = 5.0
    m0: float = 0.1

    def __post_init__(self):
        if not self.var >= 1:
            raise InvalidArgument(f"twin-beam single-beam variance must be >= 1, got {self.var}")
        if not 0 < self.m0 <= 1:
            raise InvalidArgument(f"m0 must lie in (0, 1], got {self.m0}")

    def noise(self, phase_a: float, phase_b: float) -> ModeNoise:
        return ModeNoise(self.var, self.var, (self.var - self.m0) * math.cos(phase_a + phase_b))

    def optimal_phases(self) -> tuple[float, float]:
        return (0.0, 0.0)


@dataclass(frozen=True)
class Thermal:
    """Phase-insensitive excess noise on beam a; beam b is vacuum."""

    var: float = 5.0

    def __post_init__(self):
        if not self.var >= 1:
            raise InvalidArgument(f"thermal variance must be >= 1, got {self.var}")

    def noise(self, phase_a: float, phase_b: float) -> ModeNoise:
        return ModeNoise(self.var, 1.0, 0.0)

    def optimal_phases(self) -> tuple[float, float]:
        return (0.0, 0.0)


@dataclass(frozen=True)
class Coherent:
    def noise(self, phase_a: float, phase_b: float) -> ModeNoise:
        return VACUUM

    def optimal_phases(self) -> tuple[float, float]:
        return (0.0, 0.0)


@dataclass(frozen=True)
class PhaseSensitive:
    """Beam a with quadrature variance v_min along ``axis`` and v_max orthogonal to it."""

    v_min: float
    v_max: float
    axis: float = 0.0

    def __post_init__(self):
        if self.v_min < 0 or self.v_max < 0:
            raise InvalidArgument("variances must be non-negative")

    def variance(self, phase: float) -> float:
        c, s = math.cos(phase - self.axis), math.sin(phase - self.axis)
        return self.v_min * c * c + self.v_max * s * s

    def noise(self, phase_a: float, phase_b: float) -> ModeNoise:
        return ModeNoise(self.variance(phase_a), 1.0, 0.0)

    def optimal_phases(self) -> tuple[float, float]:
        return (self.axis, 0.0)


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean_a: float = 0.0
    mean_b: float = 0.0
    var_a: float = 1.0
    var_b: float = 1.0


@dataclass(frozen=True)
class ClassicalMixture:
    """Statistical mixture of product states, one entry per component.

    Quadrature means and variances are those of the measured quadratures.
    """

    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        comps = tuple(c if isinstance(c, MixtureComponent) else MixtureComponent(*c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise InvalidArgument("a mixture needs at least one component")
        w = np.array([c.weight for c in comps])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgument(f"mixture weights must be non-negative and sum to 1, got {w.sum()}")
        if any(c.var_a < 0 or c.var_b < 0 for c in comps):
            raise InvalidArgument("component variances must be non-negative")

    def noise(self, phase_a: float, phase_b: float) -> ModeNoise:
        p = np.array([c.weight for c in self.components])
        ma = np.array([c.mean_a for c in self.components])
        mb = np.array([c.mean_b for c in self.components])
        va = np.array([c.var_a for c in self.components])
        vb = np.array([c.var_b for c in self.components])
        mean_a, mean_b = p @ ma, p @ mb
        return ModeNoise(
            float(p @ (va + ma**2) - mean_a**2),
            float(p @ (vb + mb**2) - mean_b**2),
            float(p @ (ma * mb) - mean_a * mean_b),
        )

    def optimal_phases(self) -> tuple[float, float]:
        return (0.0, 0.0)


Variant = Union[TwinBeam, Thermal, Coherent, PhaseSensitive, ClassicalMixture]


@dataclass(frozen=True)
class StateSpec:
    """A state in which modes 1..n_excited share ``variant`` and the rest are vacuum.

    ``overrides`` maps a 1-based mode rank to a different variant.
    """

    variant: Variant
    n_excited: int = 1
    overrides: Mapping[int, Variant] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_excited < 0:
            raise InvalidArgument(f"n_excited must be non-negative, got {self.n_excited}")
        object.__setattr__(self, "overrides", dict(self.overrides))

    def __hash__(self):
        return hash((self.variant, self.n_excited, tuple(sorted(self.overrides.items()))))

    def with_excited(self, n: int) -> "StateSpec":
        return StateSpec(self.variant, n, self.overrides)

    def default_phases(self) -> tuple[float, float]:
        return self.variant.optimal_phases()


def mode_noise(state: StateSpec, mode_rank: int, phase_a: float | None = None,
               phase_b: float | None = None) -> ModeNoise:
    """Quadrature noise of the mode at 1-based ``mode_rank``."""
    if mode_rank < 1:
        raise InvalidArgument(f"mode_rank is 1-based, got {mode_rank}")
    if mode_rank > state.n_excited:
        return VACUUM
    variant = state.overrides.get(mode_rank, state.variant)
    pa, pb = variant.optimal_phases()
    return variant.noise(pa if phase_a is None else phase_a, pb if phase_b is None else phase_b)


@dataclass(frozen=True, eq=False)
class QuadratureCovariance:
    """Block-diagonal covariance of (X_a1, X_b1, X_a2, X_b2, ...)."""

    blocks: np.ndarray

    @property
    def modes(self) -> int:
        return self.blocks.shape[0]

    def dense(self) -> np.ndarray:
        n = self.modes
        out = np.zeros((2 * n, 2 * n))
        for k in range(n):
            out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = self.blocks[k]
        return out

    def cholesky(self) -> np.ndarray:
        """Lower-triangular factors per block; PSD-singular blocks handled exactly."""
        va, vb, c = self.blocks[:, 0, 0], self.blocks[:, 1, 1], self.blocks[:, 0, 1]
        L = np.zeros_like(self.blocks)
        l11 = np.sqrt(va)
        safe = np.where(l11 > 0, l11, 1.0)
        l21 = np.where(l11 > 0, c / safe, 0.0)
        L[:, 0, 0] = l11
        L[:, 1, 0] = l21
        L[:, 1, 1] = np.sqrt(np.clip(vb - l21**2, 0.0, None))
        return L


def quadrature_covariance(state: StateSpec, modes: int,
                          phases: Sequence[tuple[float, float]] | tuple[float, float] | None = None
                          ) -> QuadratureCovariance:
    """Per-mode 2x2 blocks for the first ``modes`` modes.

    ``phases`` is one (phase_a, phase_b) pair for all modes or one pair per mode.
    """
    if modes < 1:
        raise InvalidArgument(f"need at least one mode, got {modes}")
    if phases is None:
        per_mode = [(None, None)] * modes
    elif np.ndim(phases) == 1:
        per_mode = [tuple(phases)] * modes
    else:
        per_mode = [tuple(p) for p in phases]
        if len(per_mode) != modes:
            raise InvalidArgument("one phase pair per mode is required")
    blocks = np.stack([mode_noise(state, k + 1, *per_mode[k]).block() for k in range(modes)])
    for k, b in enumerate(blocks):
        if np.linalg.eigvalsh(b)[0] < -1e-9 * max(1.0, b.trace()):
            raise InvalidArgument(f"mode {k + 1} covariance is not positive semidefinite")
    return QuadratureCovariance(blocks)
