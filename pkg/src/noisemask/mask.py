"""Mask transfer functions and the overlap coefficients they induce.

A mask multiplies the field by sqrt(T(x, y)) * exp(i phi(x, y)).  Binary
masks are sampled pixel-centre in/out with no anti-aliasing, so geometry
is exact only when edges fall on cell boundaries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .basis import FieldProfile, ModeBasis, ModeIndex, TransverseGrid, inner_product, norm2
from .errors import DegenerateLOError, InvalidArgument

_EDGE_EPS = 1e-9


def _square_indicator(grid: TransverseGrid, cx: float, cy: float, half_width: float) -> np.ndarray:
    X, Y = grid.mesh()
    tol = _EDGE_EPS * grid.spacing
    inside = (np.abs(X - cx) < half_width - tol) & (np.abs(Y - cy) < half_width - tol)
    return inside.astype(float)


@dataclass(frozen=True)
class BinarySquare:
    center: tuple[float, float] = (0.0, 0.0)
    half_width: float = 1.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise InvalidArgument(f"half_width must be positive, got {self.half_width}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def transmission(self, grid: TransverseGrid) -> np.ndarray:
        return _square_indicator(grid, *self.center, self.half_width)

    def phase(self, grid: TransverseGrid) -> np.ndarray | None:
        return None

    @property
    def aperture_half_width(self) -> float:
        return self.half_width


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_T(T: np.ndarray, grid: TransverseGrid) -> np.ndarray:
    T = _frozen(T)
    if T.shape != grid.shape:
        raise InvalidArgument(f"mask shape {T.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(T)) or np.any(T < 0) or np.any(T > 1):
        raise InvalidArgument("intensity transmission must lie in [0, 1]")
    return T


class _Sampled:
    grid: TransverseGrid
    T: np.ndarray

    def _check(self, grid: TransverseGrid) -> None:
        if grid != self.grid:
            raise InvalidArgument("mask was sampled on a different grid")

    def transmission(self, grid: TransverseGrid) -> np.ndarray:
        self._check(grid)
        return self.T

    @property
    def aperture_half_width(self) -> float:
        X, Y = self.grid.mesh()
        on = self.T > 0
        if not on.any():
            return 0.0
        return float(max(np.abs(X[on]).max(), np.abs(Y[on]).max()))


@dataclass(frozen=True, eq=False)
class Soft(_Sampled):
    """Gray-level intensity mask sampled on a specific grid."""

    grid: TransverseGrid
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "T", _check_T(self.T, self.grid))

    def phase(self, grid: TransverseGrid) -> None:
        self._check(grid)
        return None


@dataclass(frozen=True, eq=False)
class Phase(_Sampled):
    """Phase mask; ``T`` defaults to full transmission."""

    grid: TransverseGrid
    phi: np.ndarray
    T: np.ndarray | None = None

    def __post_init__(self):
        T = np.ones(self.grid.shape) if self.T is None else self.T
        object.__setattr__(self, "T", _check_T(T, self.grid))
        phi = _frozen(self.phi)
        if phi.shape != self.grid.shape:
            raise InvalidArgument(f"phase shape {phi.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "phi", phi)

    def phase(self, grid: TransverseGrid) -> np.ndarray:
        self._check(grid)
        return self.phi


MaskSpec = Union[BinarySquare, Soft, Phase]


def load_mask_csv(path: str | Path) -> Soft | Phase:
    """Read an ``x, y, T[, phi]`` raster written on a square cell-centred grid."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgument(f"{path}: empty mask file")
    xs = np.array([float(r["x"]) for r in rows])
    ys = np.array([float(r["y"]) for r in rows])
    ux = np.unique(xs)
    n = ux.size
    if n * n != len(rows) or np.unique(ys).size != n:
        raise InvalidArgument(f"{path}: samples do not form a square grid")
    spacing = (ux[-1] - ux[0]) / (n - 1)
    grid = TransverseGrid(float(ux[-1] + spacing / 2), n)
    ix = np.rint((xs - grid.axis[0]) / spacing).astype(int)
    iy = np.rint((ys - grid.axis[0]) / spacing).astype(int)
    T = np.zeros(grid.shape)
    T[iy, ix] = [float(r["T"]) for r in rows]
    if "phi" in rows[0] and rows[0]["phi"] not in (None, ""):
        phi = np.zeros(grid.shape)
        phi[iy, ix] = [float(r["phi"]) for r in rows]
        if np.any(phi != 0):
            return Phase(grid, phi, T)
    return Soft(grid, T)


def save_mask_csv(mask: MaskSpec, grid: TransverseGrid, path: str | Path) -> None:
    X, Y = grid.mesh()
    T = mask.transmission(grid)
    phi = mask.phase(grid)
    phi = np.zeros(grid.shape) if phi is None else phi
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "T", "phi"])
        for row in zip(X.ravel(), Y.ravel(), T.ravel(), phi.ravel()):
            w.writerow([f"{v:.12g}" for v in row])


def masked_lo(lo: FieldProfile, mask: MaskSpec) -> FieldProfile:
    """exp(-i phi) sqrt(T) times the LO, pointwise and not renormalized."""
    amp = np.sqrt(mask.transmission(lo.grid)) * lo.amplitude
    phi = mask.phase(lo.grid)
    if phi is not None:
        amp = amp * np.exp(-1j * phi)
    return FieldProfile(lo.grid, amp, contained=lo.contained, label=f"masked {lo.label}".strip())


def lo_transmission(lo: FieldProfile, mask: MaskSpec) -> float:
    weight = np.abs(lo.amplitude) ** 2
    total = float(np.sum(weight))
    if total <= 0:
        raise InvalidArgument("local oscillator has zero norm")
    return float(np.sum(mask.transmission(lo.grid) * weight) / total)


def square_lo(displacement: float, half_width: float, grid: TransverseGrid, center_y: float = 0.0) -> FieldProfile:
    """Flat-top square LO centred at (displacement, center_y), unit discrete norm."""
    if not half_width > 0:
        raise InvalidArgument(f"half_width must be positive, got {half_width}")
    if abs(displacement) + half_width > grid.half_extent or abs(center_y) + half_width > grid.half_extent:
        raise InvalidArgument(
            f"square LO (d={displacement}, half_width={half_width}) leaves the grid of half-extent {grid.half_extent}"
        )
    amp = _square_indicator(grid, displacement, center_y, half_width)
    total = np.sum(amp) * grid.spacing**2
    if total == 0:
        raise InvalidArgument("square LO is narrower than one grid cell")
    return FieldProfile(grid, amp / math.sqrt(total), normalized=True, label=f"square d={displacement:g}")


@dataclass(frozen=True, eq=False)
class OverlapSet:
    """Per-mode overlaps of the masked beam-a LO and the beam-b LO.

    ``alpha_residual`` is the beam-b LO weight outside the listed modes,
    1 - sum(alpha**2); those modes are vacuum and enter the noise as such.
    ``T_total`` is the full LO transmission and ``T_captured`` its part
    carried by the listed modes.
    """

    modes: tuple[ModeIndex, ...]
    t: np.ndarray
    phi: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    T_total: float
    alpha_residual: float = 0.0

    def __post_init__(self):
        n = len(self.modes)
        for name in ("t", "phi", "alpha", "theta"):
            arr = _frozen(np.atleast_1d(getattr(self, name)))
            if arr.shape != (n,):
                raise InvalidArgument(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if np.any(self.t < 0) or np.any(self.alpha < 0):
            raise InvalidArgument("overlap magnitudes must be non-negative")
        if not -1e-9 <= self.T_total <= 1 + 1e-6:
            raise InvalidArgument(f"T_total must lie in [0, 1], got {self.T_total}")
        if self.T_captured > self.T_total + 1e-6:
            raise InvalidArgument(
                f"captured transmission {self.T_captured:.9g} exceeds total {self.T_total:.9g}"
            )
        if self.alpha_residual < -1e-6:
            raise InvalidArgument(f"beam-b LO weight exceeds 1 (residual {self.alpha_residual:.3g})")
        if abs(float(np.sum(self.alpha**2)) + self.alpha_residual - 1.0) > 1e-6:
            raise InvalidArgument("beam-b LO weights must sum to 1")

    @property
    def T_captured(self) -> float:
        return float(np.sum(self.t**2))

    @property
    def vacuum_weight(self) -> float:
        """Beam-a weight on vacuum: unlisted modes plus mask loss."""
        return max(0.0, 1.0 - self.T_captured)

    def __len__(self) -> int:
        return len(self.modes)

    def truncated(self, count: int, renormalize_alpha: bool = False) -> "OverlapSet":
        """First ``count`` modes; dropped beam-b weight moves to the residual."""
        a = self.alpha[:count]
        resid = 1.0 - float(np.sum(a**2))
        if renormalize_alpha:
            a = a / math.sqrt(1.0 - resid)
            resid = 0.0
        return OverlapSet(self.modes[:count], self.t[:count], self.phi[:count], a, self.theta[:count],
                          self.T_total, max(resid, 0.0))

    @classmethod
    def from_arrays(cls, t: Sequence[float], alpha: Sequence[float], T_total: float | None = None,
                    phi=None, theta=None, modes=None) -> "OverlapSet":
        """Build from plain magnitudes; unlisted beam-b weight becomes the residual."""
        t = np.asarray(t, float)
        alpha = np.asarray(alpha, float)
        n = t.size
        modes = tuple(modes) if modes is not None else tuple(ModeIndex(k, 0) for k in range(n))
        zeros = np.zeros(n)
        T_total = float(np.sum(t**2)) if T_total is None else float(T_total)
        return cls(modes, t, zeros if phi is None else phi, alpha, zeros if theta is None else theta,
                   T_total, max(0.0, 1.0 - float(np.sum(alpha**2))))


def expansion_coeffs(masked: FieldProfile, lo_b: FieldProfile,
                     basis: ModeBasis | Sequence[FieldProfile],
                     modes: Sequence[ModeIndex] | None = None,
                     renormalize_alpha: bool = False) -> OverlapSet:
    """Project the masked beam-a LO and the beam-b LO onto the basis.

    Beam-b weight outside the basis is kept as ``alpha_residual`` unless
    ``renormalize_alpha`` is set, in which case the listed alphas are scaled
    to unit total weight.
    """
    if abs(norm2(lo_b) - 1.0) > 1e-6:
        raise InvalidArgument("beam-b LO must be normalized")
    if isinstance(basis, ModeBasis):
        ta = basis.project(masked)
        ab = basis.project(lo_b)
        modes = basis.modes
    else:
        ta = np.array([inner_product(A, masked) for A in basis])
        ab = np.array([inner_product(A, lo_b) for A in basis])
        if modes is None:
            modes = tuple(ModeIndex(k, 0) for k in range(len(basis)))
    w = float(np.sum(np.abs(ab) ** 2))
    if w < 1e-12:
        raise DegenerateLOError("beam-b LO is orthogonal to every basis mode")
    alpha = np.abs(ab)
    resid = max(0.0, 1.0 - w)
    if renormalize_alpha:
        alpha = alpha / math.sqrt(w)
        resid = 0.0
    T_total = min(norm2(masked), 1.0)
    return OverlapSet(tuple(modes), np.abs(ta), np.angle(ta), alpha, np.angle(ab), T_total, resid)
