"""Measured noise levels, their fluctuations and estimation sensitivities.

Everything is normalized to the standard quantum limit: the two-beam
difference signal is divided by twice the single-LO shot noise, the single
beam signal by the single-LO shot noise.  For Gaussian statistics the
variance of a measured noise level M is 2 M**2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import InvalidArgument
from .mask import OverlapSet
from .state import StateSpec, mode_noise


class Strategy(str, enum.Enum):
    TWO_BEAM = "tb"
    SINGLE_BEAM = "sb"
    NO_QUANTUM = "nq"


@dataclass(frozen=True)
class NoiseValue:
    m: float
    strategy: Strategy

    @property
    def variance(self) -> float:
        return 2.0 * self.m**2


@dataclass(frozen=True)
class SensitivityResult:
    t_value: float
    m: float
    dm_dt: float
    delta_t2: float
    strategy: Strategy
    degenerate: bool = False

    @property
    def variance(self) -> float:
        return 2.0 * self.m**2


def _per_mode(overlaps: OverlapSet, state: StateSpec, phases, zero_cross: bool = False):
    pa, pb = state.default_phases() if phases is None else phases
    va = np.empty(len(overlaps))
    vb = np.empty(len(overlaps))
    cr = np.empty(len(overlaps))
    for k in range(len(overlaps)):
        nz = mode_noise(state, k + 1, pa + overlaps.phi[k], pb + overlaps.theta[k])
        va[k], vb[k], cr[k] = nz.var_a, nz.var_b, nz.cross
    if zero_cross:
        cr[:] = 0.0
    return va, vb, cr


def _tb_value(overlaps: OverlapSet, va, vb, cr) -> float:
    t, a = overlaps.t, overlaps.alpha
    listed = np.sum(t * t * va + a * a * vb - 2.0 * t * a * cr - t * t)
    # beam-b LO weight on unlisted (vacuum) modes
    return float(0.5 + 0.5 * listed + 0.5 * overlaps.alpha_residual)


def m_tb(overlaps: OverlapSet, state: StateSpec, phases: tuple[float, float] | None = None) -> NoiseValue:
    """Normalized noise of the a - b difference signal."""
    return NoiseValue(_tb_value(overlaps, *_per_mode(overlaps, state, phases)), Strategy.TWO_BEAM)


def m_nq(overlaps: OverlapSet, state: StateSpec, phases: tuple[float, float] | None = None) -> NoiseValue:
    """Two-beam noise with every a-b correlation removed."""
    return NoiseValue(_tb_value(overlaps, *_per_mode(overlaps, state, phases, zero_cross=True)),
                      Strategy.NO_QUANTUM)


def m_sb(overlaps: OverlapSet, state: StateSpec, phase: float | None = None) -> NoiseValue:
    """Normalized noise of beam a alone."""
    phases = None if phase is None else (phase, 0.0)
    va, _, _ = _per_mode(overlaps, state, phases)
    return NoiseValue(float(np.sum(overlaps.t**2 * (va - 1.0)) + 1.0), Strategy.SINGLE_BEAM)


def noise(strategy: Strategy, overlaps: OverlapSet, state: StateSpec, phases=None) -> NoiseValue:
    strategy = Strategy(strategy)
    if strategy is Strategy.TWO_BEAM:
        return m_tb(overlaps, state, phases)
    if strategy is Strategy.NO_QUANTUM:
        return m_nq(overlaps, state, phases)
    return m_sb(overlaps, state, None if phases is None else phases[0])


class Curve(Protocol):
    def evaluate(self, strategy: Strategy, at_T: float | None = None) -> tuple[float, float, float]:
        """Return (T, M, dM/dT) at the requested point."""


def delta_t2(m: float, dm_dt: float) -> float:
    """2 M^2 / |dM/dT|^2, infinite for a flat signal."""
    if dm_dt == 0 or not math.isfinite(dm_dt):
        return math.inf
    return 2.0 * m * m / (dm_dt * dm_dt)


def sensitivity(strategy: Strategy, curve: Curve, at_T: float | None = None, slope_floor: float = 1e-12
                ) -> SensitivityResult:
    """Transmission uncertainty for ``strategy`` read off a sampled curve.

    A slope below ``slope_floor`` is reported as infinite uncertainty with
    ``degenerate`` set rather than raised.
    """
    strategy = Strategy(strategy)
    T, m, dm = curve.evaluate(strategy, at_T)
    if abs(dm) < slope_floor:
        return SensitivityResult(T, m, dm, math.inf, strategy, degenerate=True)
    return SensitivityResult(T, m, dm, delta_t2(m, dm), strategy)


def dt2_sb_closed(var: float, t_value: float) -> float:
    """Single-beam uncertainty for thermal noise ``var`` on every mode."""
    if var == 1:
        raise InvalidArgument("a coherent state (var = 1) carries no information about T")
    return 2.0 * (t_value * var + 1.0 - t_value) ** 2 / (var - 1.0) ** 2


def dt2_tb_matched(var: float, m0: float, t_value: float) -> float:
    """Two-beam uncertainty when both LOs select the same correlated modes (T near 1)."""
    if not var > 0 or not m0 > 0:
        raise InvalidArgument("var and m0 must be positive")
    num = (1.0 - t_value) * (var + 1.0) + 2.0 * t_value * m0
    return 2.0 * num**2 / (2.0 * m0 - (var + 1.0)) ** 2


def m_tb_uniform(var: float, m0: float, t_value: float, sum_t_alpha: float) -> float:
    """Two-beam noise when every mode has the same twin-beam statistics."""
    return 1.0 + 0.5 * (var - 1.0) * (t_value + 1.0) - (var - m0) * sum_t_alpha


def matched_enhancement(var: float, m0: float, t_value: float = 1.0) -> float:
    return dt2_sb_closed(var, t_value) / dt2_tb_matched(var, m0, t_value)


def asymptotic_enhancement(var: float, m0: float) -> float:
    """Nominal large-squeezing enhancement (var/m0)^2.

    The exact limit of ``matched_enhancement`` for var, 1/m0 -> infinity is a
    quarter of this.
    """
    return (var / m0) ** 2
