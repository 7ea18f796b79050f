"""End-to-end estimation: LO displacement scans, slopes, optima and the
two reference experiments (uniform-mode model and Hermite-Gauss study).

The transmission T(d) of a flat-top LO scanned across a matched square
aperture is a tent with its apex at the optimum, so dT/dd does not vanish
smoothly there.  dM/dT at the apex is taken as the ratio of second central
differences M''/T'', which for curves even about the apex reduces to the
secant ratio [M(h) - M(0)] / [T(h) - T(0)] along the physical scan.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .basis import ModeBasis, ModeIndex, TransverseGrid, default_grid, make_grid, norm2
from .errors import (
    BoundaryExtremumError,
    DegenerateParameterization,
    InvalidArgument,
    NoSignalError,
)
from .mask import BinarySquare, MaskSpec, OverlapSet, expansion_coeffs, masked_lo, square_lo
from .montecarlo import sample_difference_signal, sample_single_signal
from .noise_model import (
    SensitivityResult,
    Strategy,
    delta_t2,
    dt2_sb_closed,
    m_tb_uniform,
    noise,
    sensitivity,
)
from .state import StateSpec, TwinBeam

log = logging.getLogger(__name__)

# waist / aperture half-width; puts the N = 25 enhancement near 3.2
CALIBRATED_WAIST_RATIO = 2.0
STEP_FRACTION = 1.0 / 50.0


@dataclass(frozen=True)
class BasisConfig:
    waist: float
    n_modes: int = 25
    half_extent: float | None = None
    samples: int = 512
    center: float = 0.0

    def grid(self, aperture_half_width: float = 0.0) -> TransverseGrid:
        if self.half_extent is None:
            return default_grid(self.waist, aperture_half_width, self.samples)
        return make_grid(self.half_extent, self.samples)

    def build(self, aperture_half_width: float = 0.0) -> ModeBasis:
        return ModeBasis.even(self.n_modes, self.waist, self.grid(aperture_half_width), self.center)


def scan_step(aperture_half_width: float, grid: TransverseGrid, fraction: float = STEP_FRACTION) -> float:
    """aperture_half_width * fraction rounded to a whole number of grid cells."""
    cells = max(1, round(aperture_half_width * fraction / grid.spacing))
    return cells * grid.spacing


def symmetric_scan(center: float, step: float, points_per_side: int) -> np.ndarray:
    return center + step * np.arange(-points_per_side, points_per_side + 1)


@dataclass(frozen=True, eq=False)
class TransmissionCurve:
    """Noise levels sampled along a scan parameter.

    ``kind`` is ``"displacement"`` (parameter = LO position) or
    ``"transmission"`` (parameter = T itself).  ``estimand`` picks whether
    slopes are taken against the full LO transmission or the part carried
    by the listed modes.
    """

    kind: str
    parameter: np.ndarray
    T_total: np.ndarray
    overlaps: tuple[OverlapSet, ...]
    state: StateSpec
    estimand: str = "total"
    measured: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("displacement", "transmission"):
            raise InvalidArgument(f"unknown curve kind {self.kind!r}")
        if self.estimand not in ("total", "captured"):
            raise InvalidArgument(f"estimand must be 'total' or 'captured', got {self.estimand!r}")
        p = np.asarray(self.parameter, float)
        if p.size != len(self.overlaps) or p.size != np.size(self.T_total):
            raise InvalidArgument("parameter, T_total and overlaps must have equal length")
        if np.any(np.diff(p) <= 0):
            raise InvalidArgument("scan samples must be strictly increasing")
        object.__setattr__(self, "parameter", p)
        object.__setattr__(self, "T_total", np.asarray(self.T_total, float))
        object.__setattr__(self, "measured", {Strategy(k): np.asarray(v, float) for k, v in self.measured.items()})

    def __len__(self) -> int:
        return self.parameter.size

    @cached_property
    def T_captured(self) -> np.ndarray:
        return np.array([ov.T_captured for ov in self.overlaps])

    @property
    def T(self) -> np.ndarray:
        return self.T_total if self.estimand == "total" else self.T_captured

    @cached_property
    def _analytic(self) -> dict:
        return {}

    def analytic(self, strategy: Strategy) -> np.ndarray:
        strategy = Strategy(strategy)
        if strategy not in self._analytic:
            self._analytic[strategy] = np.array([noise(strategy, ov, self.state).m for ov in self.overlaps])
        return self._analytic[strategy]

    def m(self, strategy: Strategy) -> np.ndarray:
        strategy = Strategy(strategy)
        if strategy in self.measured:
            return self.measured[strategy]
        return self.analytic(strategy)

    def with_state(self, state: StateSpec) -> "TransmissionCurve":
        return replace(self, state=state, measured={})

    def with_measured(self, values: dict) -> "TransmissionCurve":
        return replace(self, measured={**self.measured, **values})

    def truncated(self, count: int, renormalize_alpha: bool = False) -> "TransmissionCurve":
        ovs = tuple(ov.truncated(count, renormalize_alpha) for ov in self.overlaps)
        return replace(self, overlaps=ovs, measured={})

    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.parameter)))

    def index_of(self, at_T: float | None) -> int:
        if self.kind == "displacement":
            if at_T is not None and abs(self.T[self.center_index()] - at_T) > 1e-9:
                raise InvalidArgument("displacement curves are evaluated at their d = 0 sample")
            return self.center_index()
        if at_T is None:
            return int(np.argmax(self.parameter))
        i = int(np.argmin(np.abs(self.parameter - at_T)))
        if abs(self.parameter[i] - at_T) > 1e-9:
            raise InvalidArgument(f"T = {at_T} is not a sample of this curve")
        return i

    def evaluate(self, strategy: Strategy, at_T: float | None = None, index: int | None = None
                 ) -> tuple[float, float, float]:
        i = self.index_of(at_T) if index is None else index
        M = self.m(strategy)
        return float(self.T[i]), float(M[i]), derivative_wrt_T(self, strategy, i)


def _curvature_ratio(curve: TransmissionCurve, M: np.ndarray, i: int, stride: int) -> float:
    lo, hi = i - stride, i + stride
    if lo < 0 or hi >= len(curve):
        raise InvalidArgument("derivative needs samples on both sides of the evaluation point")
    d = curve.parameter
    h1, h2 = d[i] - d[lo], d[hi] - d[i]
    if abs(h1 - h2) > 1e-9 * max(h1, h2):
        raise InvalidArgument("curvature ratio needs equally spaced neighbours")
    T = curve.T
    t2 = T[hi] - 2.0 * T[i] + T[lo]
    if abs(t2) / h1**2 < 1e-12:
        raise DegenerateParameterization(f"T'' = {t2 / h1**2:.3g} at d = {d[i]:g}")
    return float((M[hi] - 2.0 * M[i] + M[lo]) / t2)


def derivative_wrt_T(curve: TransmissionCurve, strategy: Strategy, index: int | None = None,
                     stride: int = 1, extrapolate: bool = True) -> float:
    """dM/dT at a sample.

    Transmission curves use central differences in T.  Displacement scans
    use the curvature ratio M''/T''; its error is first order in the step
    at a tent apex, so when samples at two strides are available the
    Richardson combination 2 r(h) - r(2h) is returned.
    """
    M = curve.m(strategy)
    if curve.kind == "transmission":
        i = curve.index_of(None) if index is None else index
        return float(np.gradient(M, curve.parameter, edge_order=2)[i])
    i = curve.center_index() if index is None else index
    r1 = _curvature_ratio(curve, M, i, stride)
    if extrapolate and i - 2 * stride >= 0 and i + 2 * stride < len(curve):
        return 2.0 * r1 - _curvature_ratio(curve, M, i, 2 * stride)
    return r1


@dataclass(frozen=True)
class RichardsonCheck:
    slope_h: float
    slope_2h: float

    @property
    def extrapolated(self) -> float:
        # secant error is first order in the step
        return 2.0 * self.slope_h - self.slope_2h

    @property
    def relative_spread(self) -> float:
        return abs(self.slope_h - self.slope_2h) / max(abs(self.slope_h), 1e-300)


def richardson_check(curve: TransmissionCurve, strategy: Strategy, index: int | None = None) -> RichardsonCheck:
    return RichardsonCheck(derivative_wrt_T(curve, strategy, index, 1, extrapolate=False),
                           derivative_wrt_T(curve, strategy, index, 2, extrapolate=False))


def _lo_b_profile(kind: str, basis: ModeBasis, half_width: float, position: float):
    if kind == "matched":
        return square_lo(position, half_width, basis.grid)
    if kind == "single":
        return basis.profile(0)
    raise InvalidArgument(f"lo_b must be 'matched' or 'single', got {kind!r}")


def scan_displacement(mask: MaskSpec, basis: ModeBasis, state: StateSpec, d_grid: Sequence[float],
                      lo_half_width: float | None = None, lo_b: str = "matched",
                      lo_b_position: float | None = None, estimand: str = "total",
                      renormalize_alpha: bool = False, lo_amplitude: float = 1.0,
                      threads: int = 1) -> TransmissionCurve:
    """Move the beam-a LO along x and record the overlaps at each position.

    The beam-b LO stays fixed: a square at ``lo_b_position`` (default: the
    basis centre) for ``lo_b="matched"``, or the first basis mode for
    ``lo_b="single"``.  LO amplitudes drop out after SQL normalization.
    """
    d_grid = np.asarray(d_grid, float)
    if d_grid.size < 5:
        raise InvalidArgument("a scan needs at least 5 samples for second differences")
    if np.any(np.diff(d_grid) <= 0):
        raise InvalidArgument("scan positions must be strictly increasing")
    hw = mask.aperture_half_width if lo_half_width is None else lo_half_width
    pos_b = basis.center if lo_b_position is None else lo_b_position
    ref = _lo_b_profile(lo_b, basis, hw, pos_b).scaled(lo_amplitude)
    ref = ref.scaled(1.0 / math.sqrt(norm2(ref)))

    cells = d_grid / basis.grid.spacing
    if np.any(np.abs(cells - np.rint(cells)) > 1e-6):
        log.warning("scan positions are not whole grid cells; T(d) will be quantized")

    def at(d: float):
        lo = square_lo(float(d), hw, basis.grid).scaled(lo_amplitude)
        power = norm2(lo)
        masked = masked_lo(lo, mask).scaled(1.0 / math.sqrt(power))
        ov = expansion_coeffs(masked, ref, basis, renormalize_alpha=renormalize_alpha)
        return ov

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            ovs = list(ex.map(at, d_grid))
    else:
        ovs = [at(d) for d in d_grid]
    return TransmissionCurve("displacement", d_grid, np.array([ov.T_total for ov in ovs]), tuple(ovs),
                             state, estimand)


@dataclass(frozen=True)
class Optimum:
    d_star: float
    m_star: float
    index: int
    kind: str


def _pick(M: np.ndarray, d: np.ndarray, target: float) -> int:
    tol = 1e-12 * max(1.0, abs(target))
    ties = np.flatnonzero(np.abs(M - target) <= tol)
    return int(ties[np.argmin(np.abs(d[ties]))])


def locate_optimum(curve: TransmissionCurve, strategy: Strategy, kind: str = "auto") -> Optimum:
    """Parabolic refinement around the discrete extremum of M along the scan."""
    M = curve.m(strategy)
    d = curve.parameter
    if np.ptp(M) <= 1e-12 * max(1.0, float(np.max(np.abs(M)))):
        raise NoSignalError("measured noise is flat across the scan")
    last = len(M) - 1
    i_min, i_max = _pick(M, d, M.min()), _pick(M, d, M.max())
    if kind == "auto":
        interior = [(i, k) for i, k in ((i_min, "min"), (i_max, "max")) if 0 < i < last]
        if not interior:
            raise BoundaryExtremumError("no interior extremum on the scan")
        edge = 0.5 * (M[0] + M[-1])
        i, kind = max(interior, key=lambda p: abs(M[p[0]] - edge))
    elif kind in ("min", "max"):
        i = i_min if kind == "min" else i_max
        if not 0 < i < last:
            raise BoundaryExtremumError(f"{kind} of the scan sits on its boundary")
    else:
        raise InvalidArgument(f"kind must be 'auto', 'min' or 'max', got {kind!r}")

    x0, x1, x2 = d[i - 1], d[i], d[i + 1]
    y0, y1, y2 = M[i - 1], M[i], M[i + 1]
    den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
    if den == 0:
        return Optimum(float(x1), float(y1), i, kind)
    num = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
    xs = float(np.clip(x1 - 0.5 * num / den, x0, x2))
    # Lagrange form of the same parabola
    ys = (y0 * (xs - x1) * (xs - x2) / ((x0 - x1) * (x0 - x2))
          + y1 * (xs - x0) * (xs - x2) / ((x1 - x0) * (x1 - x2))
          + y2 * (xs - x0) * (xs - x1) / ((x2 - x0) * (x2 - x1)))
    return Optimum(xs, float(ys), i, kind)


# ---------------------------------------------------------------- uniform-mode model

def uniform_slope(var: float, m0: float, t1_slope: float = 0.8) -> float:
    """dM_TB/dT for t_1 = t1_slope * T, alpha_1 = 1 in the uniform-mode model."""
    return 0.5 * (var - 1.0) - (var - m0) * t1_slope


def dt2_tb_uniform(var: float, m0: float, t_value, t1_slope: float = 0.8):
    m = m_tb_uniform(var, m0, np.asarray(t_value, float), t1_slope * np.asarray(t_value, float))
    return 2.0 * m**2 / uniform_slope(var, m0, t1_slope) ** 2


def uniform_curve(var: float, m0: float, T_grid: Sequence[float], t1_slope: float = 0.8) -> TransmissionCurve:
    """Transmission-parameterized curve for the uniform-mode model.

    The correlated mode has t_1 = t1_slope * T and alpha_1 = 1; the rest of
    the transmitted light (T - t_1^2) sits in one aggregate uncorrelated
    mode with the same single-beam noise.
    """
    T_grid = np.asarray(T_grid, float)
    if np.any(t1_slope**2 * T_grid**2 > T_grid + 1e-15):
        raise InvalidArgument("t_1 = t1_slope * T exceeds the available transmission")
    ovs = []
    for T in T_grid:
        t1 = t1_slope * T
        ovs.append(OverlapSet((ModeIndex(0, 0), ModeIndex(0, 2)), [t1, math.sqrt(max(T - t1 * t1, 0.0))],
                              [0.0, 0.0], [1.0, 0.0], [0.0, 0.0], float(T), 0.0))
    return TransmissionCurve("transmission", T_grid, T_grid, tuple(ovs), StateSpec(TwinBeam(var, m0), 2))


@dataclass(frozen=True, eq=False)
class Fig2Table:
    T: np.ndarray
    dt2_sb: np.ndarray
    dt2_tb: np.ndarray
    crossover: float | None

    def rows(self):
        return zip(self.T, self.dt2_sb, self.dt2_tb)


def fig2_table(var: float = 5.0, m0: float = 0.1, T_grid: Sequence[float] | None = None,
               t1_slope: float = 0.8) -> Fig2Table:
    """Thermal single-beam vs twin-beam uncertainty over T, with their crossing."""
    if not var > 1 or not m0 > 0:
        raise InvalidArgument("need var > 1 and m0 > 0")
    T = np.linspace(0.0, 1.0, 101) if T_grid is None else np.asarray(T_grid, float)
    sb = dt2_sb_closed(var, T)
    tb = dt2_tb_uniform(var, m0, T, t1_slope)

    def gap(x):
        return float(dt2_tb_uniform(var, m0, x, t1_slope) - dt2_sb_closed(var, x))

    crossover = None
    if gap(0.0) * gap(1.0) < 0:
        crossover = brentq(gap, 0.0, 1.0, xtol=1e-14)
    return Fig2Table(T, np.asarray(sb), np.asarray(tb), crossover)


# ---------------------------------------------------------------- Hermite-Gauss study

@dataclass(frozen=True)
class EnhancementPoint:
    n_modes: int
    ratio: float
    dt2_sb: float
    dt2_tb: float


def fig3_scan(var: float = 5.0, m0: float = 0.1, waist: float | None = None,
              aperture: BinarySquare | None = None, n_basis: int = 25, samples: int = 512,
              half_extent: float | None = None, lo_b: str = "matched", points_per_side: int = 2,
              threads: int = 1) -> TransmissionCurve:
    """Displacement scan around a centred square aperture on an even-mode HG basis."""
    aperture = BinarySquare() if aperture is None else aperture
    a = aperture.half_width
    waist = CALIBRATED_WAIST_RATIO * a if waist is None else waist
    cx = aperture.center[0]
    basis = BasisConfig(waist, n_basis, half_extent, samples, cx).build(a)
    step = scan_step(a, basis.grid)
    d = symmetric_scan(cx, step, points_per_side)
    state = StateSpec(TwinBeam(var, m0), n_basis)
    return scan_displacement(aperture, basis, state, d, lo_b=lo_b, threads=threads)


def enhancement_at_center(curve: TransmissionCurve) -> EnhancementPoint:
    i = curve.center_index() if curve.kind == "displacement" else curve.index_of(None)
    sb = _sens(curve, Strategy.SINGLE_BEAM, i)
    tb = _sens(curve, Strategy.TWO_BEAM, i)
    return EnhancementPoint(curve.state.n_excited, sb.delta_t2 / tb.delta_t2, sb.delta_t2, tb.delta_t2)


def _sens(curve: TransmissionCurve, strategy: Strategy, index: int) -> SensitivityResult:
    T, m, dm = curve.evaluate(strategy, index=index)
    return SensitivityResult(T, m, dm, delta_t2(m, dm), Strategy(strategy), degenerate=(dm == 0))


def fig3_curve(n_max: int = 25, var: float = 5.0, m0: float = 0.1, waist: float | None = None,
               aperture: BinarySquare | None = None, samples: int = 512, half_extent: float | None = None,
               renormalize_alpha: bool = False, lo_b: str = "matched", threads: int = 1
               ) -> list[EnhancementPoint]:
    """Enhancement dT_SB^2 / dT_TB^2 at T = 1 for N = 1..n_max excited even modes."""
    if not 1 <= n_max <= 25:
        raise InvalidArgument(f"n_max must lie in [1, 25], got {n_max}")
    full = fig3_scan(var, m0, waist, aperture, n_max, samples, half_extent, lo_b, threads=threads)
    out = []
    for n in range(1, n_max + 1):
        curve = full.truncated(n, renormalize_alpha).with_state(full.state.with_excited(n))
        out.append(enhancement_at_center(curve))
    return out


# ---------------------------------------------------------------- full pipeline

@dataclass(frozen=True)
class McSettings:
    shots: int = 100_000
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class EstimateReport:
    d_star: float
    d_star_sb: float
    m_star: float
    dt2: dict
    enhancement: float
    step: float
    monte_carlo: bool
    slope_spread: float
    z_scores: dict = field(default_factory=dict)


def measure_curve(curve: TransmissionCurve, mc: McSettings) -> tuple[TransmissionCurve, dict]:
    """Replace analytic noise levels with Monte Carlo estimates at every scan point."""
    if mc.shots < 10_000:
        raise InvalidArgument(f"Monte Carlo estimation needs at least 10^4 shots, got {mc.shots}")
    tb, sb, ztb, zsb = [], [], [], []
    for i, ov in enumerate(curve.overlaps):
        r_tb = sample_difference_signal(ov, curve.state, mc.shots, mc.seed, stream=2 * i, threads=mc.threads)
        r_sb = sample_single_signal(ov, curve.state, mc.shots, mc.seed, stream=2 * i + 1, threads=mc.threads)
        tb.append(r_tb.empirical_m)
        sb.append(r_sb.empirical_m)
        ztb.append(r_tb.z_against(curve.analytic(Strategy.TWO_BEAM)[i]))
        zsb.append(r_sb.z_against(curve.analytic(Strategy.SINGLE_BEAM)[i]))
    measured = curve.with_measured({Strategy.TWO_BEAM: tb, Strategy.SINGLE_BEAM: sb})
    return measured, {Strategy.TWO_BEAM: np.array(ztb), Strategy.SINGLE_BEAM: np.array(zsb)}


def estimate_shape(mask: MaskSpec, basis: ModeBasis, state: StateSpec, d_grid: Sequence[float],
                   mc: McSettings | None = None, lo_b: str = "matched", lo_b_position: float | None = None,
                   estimand: str = "total", threads: int = 1) -> EstimateReport:
    """Scan, locate the noise optimum and report the transmission uncertainties there."""
    curve = scan_displacement(mask, basis, state, d_grid, lo_b=lo_b, lo_b_position=lo_b_position,
                              estimand=estimand, threads=threads)
    z = {}
    if mc is not None:
        curve, z = measure_curve(curve, mc)
    opt = locate_optimum(curve, Strategy.TWO_BEAM)
    opt_sb = locate_optimum(curve, Strategy.SINGLE_BEAM)
    i = opt.index
    if not 0 < i < len(curve) - 1:
        raise BoundaryExtremumError("optimum too close to the scan edge for a slope estimate")
    dt2 = {s: _sens(curve, s, i) for s in (Strategy.TWO_BEAM, Strategy.SINGLE_BEAM, Strategy.NO_QUANTUM)}
    enh = dt2[Strategy.SINGLE_BEAM].delta_t2 / dt2[Strategy.TWO_BEAM].delta_t2
    spread = math.nan
    if 1 < i < len(curve) - 2:
        spread = richardson_check(curve, Strategy.TWO_BEAM, i).relative_spread
    return EstimateReport(opt.d_star, opt_sb.d_star, opt.m_star, dt2, enh,
                          float(curve.parameter[1] - curve.parameter[0]), mc is not None, spread, z)
