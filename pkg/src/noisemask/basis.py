"""Transverse grids, Hermite-Gauss modes and discrete inner products.

All integrals are midpoint Riemann sums: a grid with ``samples_per_axis``
cells of width ``spacing`` covers ``[-half_extent, half_extent]`` on each
axis and samples sit at the cell centres.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import eval_hermite

from .errors import InvalidArgument

MIN_SAMPLES = 16
EVEN_ORDERS = (0, 2, 4, 6, 8)


@dataclass(frozen=True)
class TransverseGrid:
    half_extent: float
    samples_per_axis: int

    def __post_init__(self):
        if not self.half_extent > 0:
            raise InvalidArgument(f"half_extent must be positive, got {self.half_extent}")
        if int(self.samples_per_axis) != self.samples_per_axis or self.samples_per_axis < MIN_SAMPLES:
            raise InvalidArgument(
                f"samples_per_axis must be an integer >= {MIN_SAMPLES}, got {self.samples_per_axis}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.samples_per_axis

    @property
    def shape(self) -> tuple[int, int]:
        return (self.samples_per_axis, self.samples_per_axis)

    @cached_property
    def axis(self) -> np.ndarray:
        """Cell-centre coordinates along one axis."""
        n = self.samples_per_axis
        a = -self.half_extent + (np.arange(n) + 0.5) * self.spacing
        a.setflags(write=False)
        return a

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) coordinate arrays, indexed ``[iy, ix]``."""
        return np.meshgrid(self.axis, self.axis, indexing="xy")


def make_grid(half_extent: float, samples_per_axis: int) -> TransverseGrid:
    return TransverseGrid(float(half_extent), int(samples_per_axis))


def default_grid(waist: float, aperture_half_width: float = 0.0, samples: int = 512) -> TransverseGrid:
    """Grid spanning four times the larger of waist and aperture half-width."""
    return make_grid(4.0 * max(waist, aperture_half_width), samples)


@dataclass(frozen=True)
class ModeIndex:
    m: int
    n: int

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise InvalidArgument(f"mode indices must be non-negative, got ({self.m}, {self.n})")

    def __iter__(self):
        return iter((self.m, self.n))

    def __str__(self) -> str:
        return f"TEM{self.m}{self.n}"


@dataclass(frozen=True, eq=False)
class FieldProfile:
    """Complex transverse amplitude sampled on a grid.

    ``contained`` is False when the profile was generated on a grid too small
    to hold it energetically; the values are still usable but orthonormality
    will degrade.
    """

    grid: TransverseGrid
    amplitude: np.ndarray
    normalized: bool = False
    contained: bool = True
    label: str = ""

    def __post_init__(self):
        amp = np.asarray(self.amplitude)
        if amp.shape != self.grid.shape:
            raise InvalidArgument(f"amplitude shape {amp.shape} does not match grid {self.grid.shape}")
        if not (np.iscomplexobj(amp) or np.issubdtype(amp.dtype, np.floating)):
            amp = amp.astype(float)
        amp = amp.copy()
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)
        if self.normalized:
            nrm = norm2(self)
            if abs(nrm - 1.0) > 1e-6:
                raise InvalidArgument(f"profile flagged normalized has norm^2 {nrm:.9g}")

    def scaled(self, factor: complex) -> "FieldProfile":
        return FieldProfile(self.grid, self.amplitude * factor, label=self.label, contained=self.contained)

    def to_csv(self, path: str | Path) -> None:
        """Write ``x, y, re, im`` rows, one per grid sample."""
        X, Y = self.grid.mesh()
        amp = np.asarray(self.amplitude, dtype=complex)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "re", "im"])
            for x, y, v in zip(X.ravel(), Y.ravel(), amp.ravel()):
                w.writerow([f"{x:.12g}", f"{y:.12g}", f"{v.real:.12g}", f"{v.imag:.12g}"])


def _check_same_grid(f: FieldProfile, g: FieldProfile) -> None:
    if f.grid != g.grid:
        raise InvalidArgument(f"grid mismatch: {f.grid} vs {g.grid}")


def inner_product(f: FieldProfile, g: FieldProfile) -> complex:
    """Discrete approximation of the overlap integral of conj(f) * g."""
    _check_same_grid(f, g)
    return complex(np.vdot(f.amplitude, g.amplitude) * f.grid.spacing**2)


def norm2(f: FieldProfile) -> float:
    return float(np.sum(np.abs(f.amplitude) ** 2) * f.grid.spacing**2)


def hermite_function(order: int, x: np.ndarray, waist: float) -> np.ndarray:
    """One-dimensional HG factor at the beam waist, unit L2 norm on the real line."""
    pref = (2.0 / math.pi) ** 0.25 / math.sqrt(2.0**order * math.factorial(order) * waist)
    return pref * eval_hermite(order, math.sqrt(2.0) * x / waist) * np.exp(-(x / waist) ** 2)


def hermite_gauss_value(index: ModeIndex, waist: float, x, y):
    """Analytic HG_mn amplitude at points (x, y); no grid involved."""
    m, n = index
    return hermite_function(m, np.asarray(x, float), waist) * hermite_function(n, np.asarray(y, float), waist)


def containment_radius(index: ModeIndex, waist: float) -> float:
    return 3.0 * waist * math.sqrt(max(index.m, index.n) + 1)


def hermite_gauss(index: ModeIndex, waist: float, grid: TransverseGrid, center: float = 0.0) -> FieldProfile:
    """Real HG_mn profile (flat phase), renormalized to unit discrete norm.

    ``center`` shifts the mode along x.
    """
    if not waist > 0:
        raise InvalidArgument(f"waist must be positive, got {waist}")
    index = ModeIndex(*index)
    fx = hermite_function(index.m, grid.axis - center, waist)
    fy = hermite_function(index.n, grid.axis, waist)
    amp = np.outer(fy, fx)
    amp /= math.sqrt(np.sum(amp**2) * grid.spacing**2)
    contained = grid.half_extent - abs(center) >= containment_radius(index, waist)
    return FieldProfile(grid, amp, normalized=True, contained=contained, label=str(index))


def even_mode_sequence(count: int) -> list[ModeIndex]:
    """Even-even HG modes up to TEM88, by total order and then by m."""
    if not 1 <= count <= len(EVEN_ORDERS) ** 2:
        raise InvalidArgument(f"count must lie in [1, 25], got {count}")
    pairs = sorted(((m, n) for m in EVEN_ORDERS for n in EVEN_ORDERS), key=lambda p: (p[0] + p[1], p[0]))
    return [ModeIndex(m, n) for m, n in pairs[:count]]


@dataclass(frozen=True)
class ModeBasis:
    """A stack of basis profiles sharing one grid, for fast projections."""

    modes: tuple[ModeIndex, ...]
    waist: float
    grid: TransverseGrid
    center: float = 0.0
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        profiles = [hermite_gauss(i, self.waist, self.grid, self.center) for i in self.modes]
        mat = np.stack([p.amplitude.ravel() for p in profiles])
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "_contained", all(p.contained for p in profiles))

    @classmethod
    def even(cls, count: int, waist: float, grid: TransverseGrid, center: float = 0.0) -> "ModeBasis":
        return cls(tuple(even_mode_sequence(count)), waist, grid, center)

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def contained(self) -> bool:
        return self._contained

    def profile(self, k: int) -> FieldProfile:
        return FieldProfile(self.grid, self.matrix[k].reshape(self.grid.shape), label=str(self.modes[k]))

    def profiles(self) -> list[FieldProfile]:
        return [self.profile(k) for k in range(len(self))]

    def project(self, f: FieldProfile) -> np.ndarray:
        """Complex coefficients <A_k, f> for every basis mode."""
        if f.grid != self.grid:
            raise InvalidArgument("profile grid does not match basis grid")
        return self.matrix.conj() @ f.amplitude.ravel() * self.grid.spacing**2

    def gram(self) -> np.ndarray:
        return self.matrix.conj() @ self.matrix.T * self.grid.spacing**2


def gram_matrix(profiles: Sequence[FieldProfile]) -> np.ndarray:
    if not profiles:
        return np.zeros((0, 0))
    grid = profiles[0].grid
    for p in profiles[1:]:
        _check_same_grid(profiles[0], p)
    mat = np.stack([p.amplitude.ravel() for p in profiles])
    return mat.conj() @ mat.T * grid.spacing**2
