"""Monte Carlo homodyne outcomes drawn from the Gaussian mode model.

Shots are generated in fixed-size blocks; block ``k`` of stream ``s`` uses
a Philox generator keyed by ``(seed, s)`` with its counter offset by ``k``,
so the sample stream does not depend on how blocks are scheduled across
threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .mask import OverlapSet
from .noise_model import Strategy
from .state import StateSpec, quadrature_covariance

BLOCK = 1 << 14
_MASK64 = (1 << 64) - 1


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    bit = np.random.Philox(key=[seed & _MASK64, stream & _MASK64], counter=[0, 0, 0, block])
    return np.random.Generator(bit)


@dataclass(frozen=True, eq=False)
class McRun:
    seed: int
    shots: int
    samples: np.ndarray = field(repr=False)
    strategy: Strategy = Strategy.TWO_BEAM

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if s.shape != (self.shots,):
            raise InvalidArgument(f"expected {self.shots} samples, got shape {s.shape}")

    @property
    def empirical_m(self) -> float:
        # quadrature means vanish by construction, so the raw second moment is the noise
        return float(np.mean(self.samples**2))

    @property
    def empirical_m4(self) -> float:
        return float(np.mean(self.samples**4))

    @property
    def stderr_m(self) -> float:
        return float(np.std(self.samples**2, ddof=1) / math.sqrt(self.shots))

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def stderr_mean(self) -> float:
        return float(np.std(self.samples, ddof=1) / math.sqrt(self.shots))

    @property
    def kurtosis_ratio(self) -> float:
        """<x^4> / (3 <x^2>^2); one for Gaussian samples."""
        return self.empirical_m4 / (3.0 * self.empirical_m**2)

    def z_against(self, m: float) -> float:
        return (self.empirical_m - m) / self.stderr_m

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["shot_index", "value"])
            for i, v in enumerate(self.samples):
                w.writerow([i, f"{v:.12g}"])


def _weights(overlaps: OverlapSet, state: StateSpec, phases, single: bool):
    pa, pb = state.default_phases() if phases is None else phases
    per_mode = [(pa + overlaps.phi[k], pb + overlaps.theta[k]) for k in range(len(overlaps))]
    L = quadrature_covariance(state, len(overlaps), per_mode).cholesky()
    alpha = np.zeros(len(overlaps)) if single else overlaps.alpha
    vac = overlaps.vacuum_weight + (0.0 if single else overlaps.alpha_residual)
    # signal = sum_k (t_k X_a,k - alpha_k X_b,k) + sqrt(vac) * z
    coef = np.stack([overlaps.t, -alpha], axis=1)
    row = np.einsum("ki,kij->kj", coef, L)
    scale = 1.0 if single else 1.0 / math.sqrt(2.0)
    return row.ravel() * scale, math.sqrt(vac) * scale


def _draw(seed: int, stream: int, shots: int, row: np.ndarray, vac: float, threads: int) -> np.ndarray:
    nblocks = -(-shots // BLOCK)
    ncols = row.size + 1
    w = np.append(row, vac)

    def one(k: int) -> np.ndarray:
        n = min(BLOCK, shots - k * BLOCK)
        z = block_rng(seed, stream, k).standard_normal((n, ncols))
        return z @ w

    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one, range(nblocks)))
    else:
        parts = [one(k) for k in range(nblocks)]
    return np.concatenate(parts)


def _run(overlaps, state, shots, seed, phases, stream, threads, single) -> McRun:
    if shots < 1:
        raise InvalidArgument(f"shots must be positive, got {shots}")
    row, vac = _weights(overlaps, state, phases, single)
    samples = _draw(int(seed), int(stream), int(shots), row, vac, max(1, int(threads)))
    return McRun(int(seed), int(shots), samples, Strategy.SINGLE_BEAM if single else Strategy.TWO_BEAM)


def sample_difference_signal(overlaps: OverlapSet, state: StateSpec, shots: int, seed: int,
                             phases: tuple[float, float] | None = None, stream: int = 0,
                             threads: int = 1) -> McRun:
    """Shot-by-shot (I_a - I_b) normalized so that its mean square estimates M_TB."""
    return _run(overlaps, state, shots, seed, phases, stream, threads, single=False)


def sample_single_signal(overlaps: OverlapSet, state: StateSpec, shots: int, seed: int,
                         phase: float | None = None, stream: int = 0, threads: int = 1) -> McRun:
    """Shot-by-shot I_a normalized so that its mean square estimates M_SB."""
    phases = None if phase is None else (phase, 0.0)
    return _run(overlaps, state, shots, seed, phases, stream, threads, single=True)


@dataclass(frozen=True)
class VarianceCheck:
    batches: int
    batch_size: int
    m: float
    observed: float
    predicted: float
    z: float
    kurtosis_ratio: float

    @property
    def ok(self) -> bool:
        return abs(self.z) < 3.0


def validate_variance_of_variance(run: McRun, batches: int = 100) -> VarianceCheck:
    """Compare the scatter of per-batch noise estimates with 2 M^2 / batch_size."""
    if run.shots < 10_000:
        raise InvalidArgument(f"need at least 10^4 shots, got {run.shots}")
    if batches < 10:
        raise InvalidArgument("need at least 10 batches")
    m = run.empirical_m
    if not m > 0:
        raise InvalidArgument("degenerate run: the signal has zero variance")
    size = run.shots // batches
    x2 = run.samples[: size * batches].reshape(batches, size) ** 2
    est = x2.mean(axis=1)
    observed = float(np.var(est, ddof=1))
    predicted = 2.0 * m * m / size
    # sample variance of `batches` near-normal values has relative spread sqrt(2/(k-1))
    z = (observed - predicted) / (predicted * math.sqrt(2.0 / (batches - 1)))
    return VarianceCheck(batches, size, m, observed, predicted, z, run.kurtosis_ratio)
