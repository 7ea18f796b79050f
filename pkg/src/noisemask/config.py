"""TOML run configuration.

Every section maps onto a small dataclass; missing keys take defaults and
unknown keys are rejected so that typos do not silently fall back.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .basis import ModeBasis
from .errors import ConfigError
from .mask import BinarySquare, MaskSpec, load_mask_csv
from .protocol import CALIBRATED_WAIST_RATIO, BasisConfig, McSettings, scan_step, symmetric_scan
from .state import (
    ClassicalMixture,
    Coherent,
    MixtureComponent,
    PhaseSensitive,
    StateSpec,
    Thermal,
    TwinBeam,
)

OUT_ENV = "NOISEMASK_OUT"


@dataclass
class BasisSection:
    waist: float | None = None
    waist_ratio: float = CALIBRATED_WAIST_RATIO
    n_modes: int = 25
    half_extent: float | None = None
    samples: int = 512
    center: float = 0.0


@dataclass
class MaskSection:
    kind: str = "square"
    center: list = field(default_factory=lambda: [0.0, 0.0])
    half_width: float = 1.0
    path: str | None = None


@dataclass
class StateSection:
    kind: str = "twin_beam"
    var: float = 5.0
    m0: float = 0.1
    v_min: float = 0.5
    v_max: float = 2.0
    axis: float = 0.0
    n_excited: int = 25
    components: list = field(default_factory=list)


@dataclass
class ScanSection:
    d_min: float | None = None
    d_max: float | None = None
    steps: int | None = None
    lo_b: str = "matched"
    estimand: str = "total"


@dataclass
class McSection:
    shots: int = 100_000
    seed: int = 0
    enabled: bool = False


@dataclass
class Fig2Section:
    t_points: int = 101
    t1_slope: float = 0.8


@dataclass
class Fig3Section:
    n_max: int = 25


@dataclass
class OutputSection:
    directory: str | None = None
    formats: list = field(default_factory=lambda: ["csv"])


@dataclass
class RunConfig:
    basis: BasisSection = field(default_factory=BasisSection)
    mask: MaskSection = field(default_factory=MaskSection)
    state: StateSection = field(default_factory=StateSection)
    scan: ScanSection = field(default_factory=ScanSection)
    mc: McSection = field(default_factory=McSection)
    fig2: Fig2Section = field(default_factory=Fig2Section)
    fig3: Fig3Section = field(default_factory=Fig3Section)
    output: OutputSection = field(default_factory=OutputSection)
    threads: int = 0

    # ------------------------------------------------------------ (de)serialization

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        kwargs = {}
        sections = {f.name: f for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key == "manifest":
                continue
            if key not in sections:
                raise ConfigError(f"unknown config section {key!r}")
            if key == "threads":
                kwargs[key] = int(value)
                continue
            section_cls = sections[key].default_factory
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table")
            names = {f.name for f in dataclasses.fields(section_cls)}
            extra = set(value) - names
            if extra:
                raise ConfigError(f"unknown keys in [{key}]: {sorted(extra)}")
            kwargs[key] = section_cls(**value)
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        def strip(obj):
            if isinstance(obj, dict):
                return {k: strip(v) for k, v in obj.items() if v is not None}
            if isinstance(obj, list):
                return [strip(v) for v in obj]
            return obj

        return strip(dataclasses.asdict(self))

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        try:
            return cls.from_dict(data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text, str(path))

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    # ------------------------------------------------------------ model objects

    def build_mask(self) -> MaskSpec:
        m = self.mask
        if m.kind == "square":
            return BinarySquare(tuple(m.center), m.half_width)
        if m.kind == "csv":
            if not m.path:
                raise ConfigError("mask kind 'csv' needs a path")
            return load_mask_csv(m.path)
        raise ConfigError(f"unknown mask kind {m.kind!r}")

    def aperture_half_width(self) -> float:
        return self.build_mask().aperture_half_width

    def basis_config(self) -> BasisConfig:
        b = self.basis
        a = self.aperture_half_width()
        waist = b.waist_ratio * a if b.waist is None else b.waist
        return BasisConfig(waist, b.n_modes, b.half_extent, b.samples, b.center)

    def build_basis(self) -> ModeBasis:
        mask = self.build_mask()
        cfg = self.basis_config()
        basis = cfg.build(mask.aperture_half_width)
        if hasattr(mask, "grid") and mask.grid != basis.grid:
            raise ConfigError("CSV mask grid differs from the basis grid; set basis.half_extent and samples to match")
        return basis

    def build_state(self) -> StateSpec:
        s = self.state
        kinds = {
            "twin_beam": lambda: TwinBeam(s.var, s.m0),
            "thermal": lambda: Thermal(s.var),
            "coherent": Coherent,
            "phase_sensitive": lambda: PhaseSensitive(s.v_min, s.v_max, s.axis),
            "classical_mixture": lambda: ClassicalMixture(tuple(MixtureComponent(**c) for c in s.components)),
        }
        if s.kind not in kinds:
            raise ConfigError(f"unknown state kind {s.kind!r}")
        return StateSpec(kinds[s.kind](), s.n_excited)

    def scan_positions(self, grid) -> np.ndarray:
        sc = self.scan
        step = scan_step(self.aperture_half_width(), grid)
        if sc.d_min is None and sc.d_max is None and sc.steps is None:
            return symmetric_scan(self.basis.center, step, 8)
        lo = -8 * step if sc.d_min is None else sc.d_min
        hi = 8 * step if sc.d_max is None else sc.d_max
        n = 17 if sc.steps is None else sc.steps
        if n < 5 or not hi > lo:
            raise ConfigError("scan needs d_max > d_min and at least 5 steps")
        return np.linspace(lo, hi, n)

    def mc_settings(self) -> McSettings:
        return McSettings(self.mc.shots, self.mc.seed, self.resolved_threads())

    def resolved_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def output_dir(self) -> Path:
        return Path(self.output.directory or os.environ.get(OUT_ENV, "noisemask-out"))

    def validate(self) -> None:
        """Build every model object once so invalid physics fails early."""
        try:
            basis = self.build_basis()
            self.build_state()
            self.scan_positions(basis.grid)
            if self.mc.shots < 1:
                raise ConfigError("mc.shots must be positive")
            if not 1 <= self.fig3.n_max <= 25:
                raise ConfigError("fig3.n_max must lie in [1, 25]")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
