"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 self-test failure,
3 numerical degeneracy (flat signal, boundary optimum, degenerate LO).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import tomli_w

from . import protocol
from .config import OUT_ENV, RunConfig
from .errors import (
    BoundaryExtremumError,
    ConfigError,
    DegenerateLOError,
    DegenerateParameterization,
    NoSignalError,
)
from .mask import BinarySquare, expansion_coeffs, masked_lo, square_lo
from .montecarlo import sample_difference_signal, sample_single_signal, validate_variance_of_variance
from .noise_model import Strategy, m_sb, m_tb
from .state import Coherent, StateSpec, TwinBeam

log = logging.getLogger("noisemask")

EXIT_OK, EXIT_CONFIG, EXIT_SELFTEST, EXIT_DEGENERATE = 0, 1, 2, 3
NUMERIC_ERRORS = (BoundaryExtremumError, DegenerateLOError, DegenerateParameterization, NoSignalError)

CSV_HELP = f"""\
output files (floats at 12 significant digits):
  fig2.csv      T, dt2_sb, dt2_tb
  fig3.csv      n, ratio, dt2_sb, dt2_tb
  scan.csv      d, T_total, T_captured, m_tb, m_sb
  mc.csv        strategy, analytic_m, empirical_m, stderr_m, z, kurtosis_ratio, vov_z
  mc_samples_<strategy>.csv   shot_index, value   (when output.formats has "samples")
  estimate.csv  key, value
  manifest.toml effective configuration; rerun with --config manifest.toml

the output directory defaults to ${OUT_ENV} or ./noisemask-out
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_manifest(out: Path, command: str, cfg: RunConfig, argv: Sequence[str]) -> None:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    data = cfg.to_dict()
    data["manifest"] = {
        "command": command,
        "argv": list(argv),
        "version": version,
        "waist": cfg.basis_config().waist,
    }
    (out / "manifest.toml").write_text(tomli_w.dumps(data))


# ---------------------------------------------------------------- commands

def cmd_fig2(cfg: RunConfig, out: Path) -> str:
    T = np.linspace(0.0, 1.0, cfg.fig2.t_points)
    table = protocol.fig2_table(cfg.state.var, cfg.state.m0, T, cfg.fig2.t1_slope)
    write_csv(out / "fig2.csv", ["T", "dt2_sb", "dt2_tb"], table.rows())
    cross = "none" if table.crossover is None else f"{table.crossover:.3f}"
    return f"fig2: crossover T={cross}, dt2_sb(1)={table.dt2_sb[-1]:.6g}, dt2_tb(1)={table.dt2_tb[-1]:.6g}"


def cmd_fig3(cfg: RunConfig, out: Path) -> str:
    mask = cfg.build_mask()
    if not isinstance(mask, BinarySquare):
        raise ConfigError("fig3 needs a square mask")
    b = cfg.basis_config()
    pts = protocol.fig3_curve(cfg.fig3.n_max, cfg.state.var, cfg.state.m0, b.waist, mask, b.samples,
                              b.half_extent, lo_b=cfg.scan.lo_b, threads=cfg.resolved_threads())
    write_csv(out / "fig3.csv", ["n", "ratio", "dt2_sb", "dt2_tb"],
              ((p.n_modes, p.ratio, p.dt2_sb, p.dt2_tb) for p in pts))
    last = pts[-1]
    return f"fig3: ratio(N={last.n_modes})={last.ratio:.4f}, waist={b.waist:g}"


def _scan(cfg: RunConfig):
    mask, basis, state = cfg.build_mask(), cfg.build_basis(), cfg.build_state()
    d = cfg.scan_positions(basis.grid)
    curve = protocol.scan_displacement(mask, basis, state, d, lo_b=cfg.scan.lo_b, estimand=cfg.scan.estimand,
                                       threads=cfg.resolved_threads())
    return mask, basis, state, curve


def cmd_scan(cfg: RunConfig, out: Path) -> str:
    _, _, _, curve = _scan(cfg)
    rows = zip(curve.parameter, curve.T_total, curve.T_captured, curve.m(Strategy.TWO_BEAM),
               curve.m(Strategy.SINGLE_BEAM))
    write_csv(out / "scan.csv", ["d", "T_total", "T_captured", "m_tb", "m_sb"], rows)
    opt = protocol.locate_optimum(curve, Strategy.TWO_BEAM)
    return f"scan: d_star={opt.d_star:.6g}, m_star={opt.m_star:.6g} ({opt.kind})"


def _reference_overlaps(cfg: RunConfig):
    mask, basis = cfg.build_mask(), cfg.build_basis()
    hw = mask.aperture_half_width
    lo = square_lo(basis.center, hw, basis.grid)
    return expansion_coeffs(masked_lo(lo, mask), lo, basis)


def cmd_mc(cfg: RunConfig, out: Path) -> str:
    ov = _reference_overlaps(cfg)
    state = cfg.build_state()
    mc = cfg.mc_settings()
    runs = {
        Strategy.TWO_BEAM: (m_tb(ov, state).m, sample_difference_signal(ov, state, mc.shots, mc.seed, threads=mc.threads)),
        Strategy.SINGLE_BEAM: (m_sb(ov, state).m, sample_single_signal(ov, state, mc.shots, mc.seed, stream=1,
                                                                      threads=mc.threads)),
    }
    rows, zs = [], []
    for strat, (analytic, run) in runs.items():
        vov = validate_variance_of_variance(run) if run.shots >= 10_000 else None
        z = run.z_against(analytic)
        zs.append(z)
        rows.append((strat.value, analytic, run.empirical_m, run.stderr_m, z, run.kurtosis_ratio,
                     math.nan if vov is None else vov.z))
        if "samples" in cfg.output.formats:
            run.to_csv(out / f"mc_samples_{strat.value}.csv")
    write_csv(out / "mc.csv", ["strategy", "analytic_m", "empirical_m", "stderr_m", "z", "kurtosis_ratio", "vov_z"],
              rows)
    worst = max(abs(z) for z in zs)
    verdict = "|z|<3" if worst < 3 else "|z|>=3"
    return "mc: analytic/MC z=" + ", ".join(f"{z:+.3f}" for z in zs) + f", {verdict}"


def cmd_estimate(cfg: RunConfig, out: Path) -> str:
    mask, basis, state = cfg.build_mask(), cfg.build_basis(), cfg.build_state()
    d = cfg.scan_positions(basis.grid)
    mc = cfg.mc_settings() if cfg.mc.enabled else None
    rep = protocol.estimate_shape(mask, basis, state, d, mc=mc, lo_b=cfg.scan.lo_b, estimand=cfg.scan.estimand,
                                  threads=cfg.resolved_threads())
    rows = [("d_star", rep.d_star), ("d_star_sb", rep.d_star_sb), ("m_star", rep.m_star), ("step", rep.step),
            ("monte_carlo", int(rep.monte_carlo)), ("slope_spread", rep.slope_spread),
            ("enhancement", rep.enhancement)]
    for s, r in rep.dt2.items():
        rows.append((f"dt2_{s.value}", r.delta_t2))
        rows.append((f"dm_dt_{s.value}", r.dm_dt))
    write_csv(out / "estimate.csv", ["key", "value"], rows)
    return f"estimate: d_star={rep.d_star:.6g}, enhancement={rep.enhancement:.4g}"


# ---------------------------------------------------------------- selftest

def _selftest_checks(scale: float) -> list[tuple[str, Callable[[], tuple[bool, str]]]]:
    aperture = BinarySquare((0.0, 0.0), 1.0)
    cfg = protocol.BasisConfig(protocol.CALIBRATED_WAIST_RATIO)
    basis = cfg.build(1.0)

    def orthonormality():
        err = float(np.abs(basis.gram() - np.eye(len(basis))).max())
        return err <= 1e-4 * scale, f"max |G - I| = {err:.2e}"

    def parseval():
        lo = square_lo(0.0, 1.0, basis.grid)
        ov = expansion_coeffs(masked_lo(lo, aperture), lo, basis)
        caps = np.cumsum(ov.t**2)
        ok = bool(np.all(np.diff(caps) >= -1e-12 * scale) and caps[-1] <= ov.T_total + 1e-6 * scale)
        return ok, f"T_captured(25) = {caps[-1]:.6f} <= T_total = {ov.T_total:.6f}"

    def moments():
        from .mask import OverlapSet

        ov = OverlapSet.from_arrays([1.0], [1.0])
        run = sample_difference_signal(ov, StateSpec(TwinBeam(5.0, 0.1), 1), 20_000, seed=12345)
        vov = validate_variance_of_variance(run)
        ok = abs(run.kurtosis_ratio - 1.0) <= 0.05 * scale and abs(vov.z) < 3.0 * scale
        return ok, f"<x^4>/3<x^2>^2 = {run.kurtosis_ratio:.4f}, variance-of-variance z = {vov.z:+.2f}"

    def coherent():
        lo = square_lo(3 * basis.grid.spacing, 1.0, basis.grid)
        ref = square_lo(0.0, 1.0, basis.grid)
        ov = expansion_coeffs(masked_lo(lo, aperture), ref, basis)
        st = StateSpec(Coherent(), len(basis))
        dev = max(abs(m_tb(ov, st).m - 1.0), abs(m_sb(ov, st).m - 1.0))
        return dev <= 1e-12 * scale, f"max |M - 1| = {dev:.1e}"

    return [("orthonormality", orthonormality), ("parseval", parseval), ("gaussian moments", moments),
            ("coherent null", coherent)]


def cmd_selftest(scale: float = 1.0) -> int:
    failed = 0
    print(f"{'check':<18} {'result':<6} detail")
    for name, check in _selftest_checks(scale):
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        print(f"{name:<18} {'PASS' if ok else 'FAIL':<6} {detail}")
    return EXIT_SELFTEST if failed else EXIT_OK


# ---------------------------------------------------------------- entry point

COMMANDS = {
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "scan": cmd_scan,
    "mc": cmd_mc,
    "estimate": cmd_estimate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./noisemask-out)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    common.add_argument("--shots", type=int, help="Monte Carlo shots per point")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="noisemask", description="Mask estimation from homodyne noise of twin beams.",
                     epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    st = sub.add_parser("selftest", parents=[common], help="basis, Parseval, moment and coherent-state checks")
    st.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every check tolerance")
    helps = {
        "scan": "LO displacement scan (scan.csv)",
        "fig2": "uniform-mode uncertainty vs T (fig2.csv)",
        "fig3": "enhancement vs number of HG modes (fig3.csv)",
        "mc": "Monte Carlo check of the analytic noise (mc.csv)",
        "estimate": "full pipeline: scan, optimum, sensitivities (estimate.csv)",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, epilog=CSV_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.mc.seed = args.seed
    if args.shots is not None:
        cfg.mc.shots = args.shots
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.output.directory = str(args.out)
    cfg.validate()
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "selftest":
        return cmd_selftest(args.tolerance_scale)

    out = cfg.output_dir()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        summary = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical degeneracy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    write_manifest(out, args.command, cfg, argv)
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
