"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 data or I/O error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .energy import PayloadClearance, extrapolate
from .estimate import (
    FIXED_K,
    JOINT,
    DegenerateDataError,
    StaticMeasurement,
    adopt,
    fit_damping,
    fit_stiffness,
    loss_surface,
)
from .ingest import (
    LogParseError,
    SegmentationError,
    generate_synthetic_log,
    group_trials,
    read_log,
    segment_impact,
    write_log,
)
from .model import ModelParams, init_from_altitude, simulate
from .optimize import NelderMeadOptions
from .signals import FilterSpec, lowpass

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NONCONVERGED = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    mass: float = 0.241
    damping: float = 46.0
    stiffness: float = 7040.0
    gravity: float = 9.81
    cutoff_hz: float = 500.0
    sample_rate_hz: float = 10_000.0
    log_rate_hz: float = 1000.0
    x_limit_mm: float = 16.0
    ff_threshold: float = 3.0
    ff_min_duration: float = 0.050
    impact_threshold: float = 3.0 * 9.80665
    peak_window: float = 0.100
    noise_sigma: float = 0.5
    seed: int = 0

    def params(self) -> ModelParams:
        return ModelParams(m=self.mass, c=self.damping, k=self.stiffness, g=self.gravity)

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.cutoff_hz, self.sample_rate_hz)

    def clearance(self) -> PayloadClearance:
        return PayloadClearance(self.x_limit_mm / 1000.0)

    def segment_kwargs(self) -> dict:
        return dict(
            ff_threshold=self.ff_threshold,
            ff_min_duration=self.ff_min_duration,
            impact_threshold=self.impact_threshold,
            peak_window=self.peak_window,
        )

    def validate(self) -> "RunConfig":
        try:
            self.params()
            self.filter_spec()
            self.clearance()
        except ValueError as exc:
            raise UsageError(f"invalid configuration: {exc}") from None
        if not self.log_rate_hz > 0:
            raise UsageError("log_rate_hz must be > 0")
        if not 0 < self.ff_threshold < self.impact_threshold:
            raise UsageError("need 0 < ff_threshold < impact_threshold")
        if not (self.ff_min_duration > 0 and self.peak_window > 0):
            raise UsageError("ff_min_duration and peak_window must be > 0")
        if self.noise_sigma < 0:
            raise UsageError("noise_sigma must be >= 0")
        return self

    def provenance(self, command: str) -> str:
        items = " ".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return f"generated-by msdimpact {__version__} command={command} {items}"


CONFIG_TYPES = {f.name: (int if f.name == "seed" else float) for f in fields(RunConfig)}


def read_config(path: Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown or malformed entry {raw.strip()!r}")
        try:
            values[key] = CONFIG_TYPES[key](value.strip())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}") from None
    return values


def parse_altitude(text: str) -> float:
    """Metres, or centimetres with a ``cm`` suffix (``150cm``)."""
    s = text.strip().lower()
    try:
        if s.endswith("cm"):
            return float(s[:-2]) / 100.0
        if s.endswith("m"):
            return float(s[:-1])
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad altitude {text!r}") from None


def altitude_list(text: str) -> list[float]:
    return [parse_altitude(part) for part in text.split(",") if part.strip()]


def int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def float_pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def resolution_arg(text: str):
    parts = int_list(text)
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return tuple(parts)
    raise argparse.ArgumentTypeError("resolution is N or NC,NK")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


FLAG_FIELDS = {
    "mass": float,
    "damping": float,
    "stiffness": float,
    "gravity": float,
    "cutoff_hz": float,
    "sample_rate_hz": float,
    "log_rate_hz": float,
    "x_limit_mm": float,
    "ff_threshold": float,
    "ff_min_duration": float,
    "impact_threshold": float,
    "peak_window": float,
    "noise_sigma": float,
    "seed": int,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value config file")
    common.add_argument("--out", type=Path, help="output path")
    for name, typ in FLAG_FIELDS.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)

    parser = _Parser(prog="msdimpact", description="Drone-frame impact model: simulate, fit, analyse.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="write an impact trace CSV")
    p.add_argument("--altitude", type=parse_altitude, required=True, help="drop altitude (m, or e.g. 150cm)")
    p.add_argument("--t-max", type=float, default=0.05)
    p.add_argument("--dt", type=float, default=None, help="trace step [s] (default 1/sample-rate-hz)")
    p.add_argument("--truncate", action="store_true", help="stop at the payload clearance")

    p = sub.add_parser("synth", parents=[common], help="generate synthetic drop logs")
    p.add_argument("--altitudes", type=altitude_list, default=[0.5, 1.0, 1.5])
    p.add_argument("--trials", type=int_list, default=[101, 97, 89])
    p.add_argument("--pre-roll", type=float, default=0.5)
    p.add_argument("--post-roll", type=float, default=0.2)

    p = sub.add_parser("segment", parents=[common], help="locate free fall, impact and peak in logs")
    p.add_argument("inputs", nargs="*", type=Path)

    p = sub.add_parser("fit-stiffness", parents=[common], help="static stiffness from force/displacement CSV")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--weight", type=float, default=None, help="pinned intercept W [N] (default m*g)")

    p = sub.add_parser("fit-damping", parents=[common], help="fit c (and optionally k) to drop logs")
    p.add_argument("inputs", nargs="*", type=Path)
    p.add_argument("--joint", action="store_true", help="fit c and k together")
    p.add_argument("--c0", type=float, default=50.0)
    p.add_argument("--k0", type=float, default=None, help="start/fixed k (default --stiffness)")
    p.add_argument("--max-iter", type=int, default=2000, help="simplex iteration cap")

    p = sub.add_parser("loss-surface", parents=[common], help="weighted loss on a (c, k) grid")
    p.add_argument("inputs", nargs="*", type=Path)
    p.add_argument("--c-range", type=float_pair, default=(30.0, 60.0))
    p.add_argument("--k-range", type=float_pair, default=(5000.0, 9000.0))
    p.add_argument("--resolution", type=resolution_arg, default=21)

    p = sub.add_parser("energy", parents=[common], help="energy partition across altitudes")
    p.add_argument("--altitudes", type=altitude_list, default=[0.5, 1.0, 1.5, 2.0, 5.0, 10.0, 20.0])
    return parser


def effective_config(args) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    for name in FLAG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return replace(RunConfig(), **values).validate()


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    return args.out


def _open_out(path: Path):
    if not path.parent.exists():
        raise DataError(f"output directory {path.parent} does not exist")
    try:
        return path.open("w", newline="")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def _expand_inputs(paths: Sequence[Path]) -> list[Path]:
    found = []
    for p in paths:
        if p.is_dir():
            found.extend(sorted(p.glob("*.log")))
        else:
            found.append(p)
    if not found:
        raise UsageError("no input logs given")
    return found


def _fmt(x) -> str:
    return f"{x:.12g}"


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _require_out(args)
    params = cfg.params()
    dt = args.dt if args.dt is not None else 1.0 / cfg.sample_rate_hz
    try:
        spec = FilterSpec(cfg.cutoff_hz, 1.0 / dt)
        trace = simulate(
            params,
            init_from_altitude(params, args.altitude),
            dt=dt,
            t_max=args.t_max,
            x_limit=cfg.clearance().x_limit if args.truncate else None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    filtered = lowpass(trace.sensor, spec)
    with _open_out(out) as fh:
        fh.write(f"# {cfg.provenance('simulate')} altitude={args.altitude!r} dt={dt!r}\n")
        fh.write(f"# truncation_reason={trace.truncation_reason}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "x_m", "v_mps", "a_mps2", "sensor_mps2", "sensor_filtered_mps2"])
        for row in zip(trace.t, trace.x, trace.v, trace.a, trace.sensor, filtered):
            w.writerow([_fmt(v) for v in row])
    print(f"wrote {len(trace)} samples to {out} (max x = {trace.x.max() * 1000:.3f} mm)")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    out = _require_out(args)
    if len(args.altitudes) != len(args.trials):
        raise UsageError("--altitudes and --trials must have the same length")
    if not out.parent.exists():
        raise DataError(f"output directory {out.parent} does not exist")
    out.mkdir(exist_ok=True)
    params, spec = cfg.params(), cfg.filter_spec()
    header = cfg.provenance("synth")
    rows = []
    counter = 0
    for h, n in zip(args.altitudes, args.trials):
        if not h > 0 or n < 1:
            raise UsageError("altitudes must be > 0 and trial counts >= 1")
        for i in range(n):
            seed = int(np.random.SeedSequence([cfg.seed, counter]).generate_state(1)[0])
            counter += 1
            trial_id = f"synth-{h * 100:g}cm-{i:03d}"
            acc_log, truth = generate_synthetic_log(
                params,
                h,
                spec,
                noise_sigma=cfg.noise_sigma,
                seed=seed,
                pre_roll=args.pre_roll,
                log_rate_hz=cfg.log_rate_hz,
                post_roll=args.post_roll,
                trial_id=trial_id,
            )
            write_log(acc_log, out / f"{trial_id}.log", units="g", comments=[header])
            rows.append([trial_id, _fmt(h * 100), truth.freefall_start, truth.impact_start, truth.peak, seed])
    with _open_out(out / "ground_truth.csv") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "altitude_cm", "freefall_start", "impact_start", "peak", "seed"])
        w.writerows(rows)
    print(f"wrote {len(rows)} logs to {out}")
    return EXIT_OK


def _load_trials(cfg: RunConfig, paths: Sequence[Path]):
    trials, failures = [], []
    for path in _expand_inputs(paths):
        try:
            acc_log = read_log(path)
            trials.append((path, acc_log, segment_impact(acc_log, **cfg.segment_kwargs())))
        except OSError as exc:
            failures.append(f"{path}: {exc}")
        except (LogParseError, SegmentationError) as exc:
            failures.append(f"{path}: {exc}")
    if failures:
        raise DataError("failed inputs:\n  " + "\n  ".join(failures))
    return trials


def cmd_segment(cfg: RunConfig, args) -> int:
    trials = _load_trials(cfg, args.inputs)
    buf = io.StringIO()
    buf.write(f"# {cfg.provenance('segment')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["file", "trial_id", "altitude_cm", "freefall_start", "impact_start", "peak"])
    for path, acc_log, seg in trials:
        w.writerow([str(path), acc_log.trial_id, _fmt(acc_log.altitude * 100), seg.freefall_start, seg.impact_start, seg.peak])
    if args.out is None:
        sys.stdout.write(buf.getvalue())
    else:
        with _open_out(args.out) as fh:
            fh.write(buf.getvalue())
        print(f"segmented {len(trials)} logs into {args.out}")
    return EXIT_OK


def read_static_csv(path: Path) -> list[StaticMeasurement]:
    """``displacement_mm,force_N`` rows; returns SI measurements."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["displacement_mm", "force_N"]:
        raise DataError(f"{path}: header must be displacement_mm,force_N")
    data = []
    for i, row in enumerate(reader, start=2):
        try:
            data.append(StaticMeasurement(float(row["displacement_mm"]) / 1000.0, float(row["force_N"])))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: data row {i}: {exc}") from None
    return data


def _write_json(path: Path, payload: dict) -> None:
    with _open_out(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit_stiffness(cfg: RunConfig, args) -> int:
    data = read_static_csv(args.input)
    W = args.weight if args.weight is not None else cfg.mass * cfg.gravity
    try:
        fit = fit_stiffness(data, W)
    except DegenerateDataError as exc:
        raise DataError(str(exc)) from None
    report = {
        "mode": "stiffness",
        "parameters": {"k": fit.k, "intercept_N": fit.intercept},
        "rmse_N": fit.rmse,
        "n_points": len(data),
        "iterations": 0,
        "converged": True,
        "config": cfg.provenance("fit-stiffness"),
    }
    if args.out is not None:
        _write_json(args.out, report)
    print(f"k = {fit.k:.6g} N/m (W = {W:.4g} N, rmse = {fit.rmse:.4g} N, n = {len(data)})")
    return EXIT_OK


def cmd_fit_damping(cfg: RunConfig, args) -> int:
    trials = _load_trials(cfg, args.inputs)
    groups = group_trials((acc_log, seg) for _, acc_log, seg in trials)
    spec = cfg.filter_spec()
    k0 = args.k0 if args.k0 is not None else cfg.stiffness
    opts = NelderMeadOptions(max_iter=args.max_iter)
    try:
        static = fit_damping(groups, spec, cfg.mass, FIXED_K, args.c0, k0, cfg.gravity, opts)
        joint = fit_damping(groups, spec, cfg.mass, JOINT, args.c0, k0, cfg.gravity, opts)
    except DegenerateDataError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    main = joint if args.joint else static
    chosen = adopt(joint, static)
    gap = (static.loss - joint.loss) / joint.loss if joint.loss > 0 else 0.0
    report = {
        "mode": "damping-joint" if args.joint else "damping-fixed-k",
        "parameters": {"c": main.c, "k": main.k, "m": cfg.mass, "g": cfg.gravity},
        "loss": main.loss,
        "iterations": main.iterations,
        "converged": main.converged,
        "groups": [{"altitude_cm": g.altitude * 100, "trials": len(g)} for g in groups],
        "comparison": {
            "joint": {"c": joint.c, "k": joint.k, "loss": joint.loss},
            "static_k": {"c": static.c, "k": static.k, "loss": static.loss},
            "relative_loss_gap": gap,
            "adopted": {"c": chosen.c, "k": chosen.k, "mode": chosen.mode},
        },
        "config": cfg.provenance("fit-damping"),
    }
    if args.out is not None:
        _write_json(args.out, report)
    print(f"{report['mode']}: c = {main.c:.6g} N s/m, k = {main.k:.6g} N/m, loss = {main.loss:.8g}")
    print(f"  joint fit    : c = {joint.c:.6g}, k = {joint.k:.6g}, loss = {joint.loss:.8g}")
    print(f"  static k     : c = {static.c:.6g}, k = {static.k:.6g}, loss = {static.loss:.8g}")
    print(f"  relative gap : {gap:.3g} -> adopting {chosen.mode} (c = {chosen.c:.6g}, k = {chosen.k:.6g})")
    if not main.converged:
        print("warning: optimizer did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_loss_surface(cfg: RunConfig, args) -> int:
    out = _require_out(args)
    trials = _load_trials(cfg, args.inputs)
    groups = group_trials((acc_log, seg) for _, acc_log, seg in trials)
    try:
        surf = loss_surface(groups, cfg.filter_spec(), cfg.mass, args.c_range, args.k_range, args.resolution, cfg.gravity)
    except DegenerateDataError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    header = cfg.provenance("loss-surface")
    for path, grid, label in ((out, surf.loss, "raw"), (out.with_suffix(".log1p.csv"), surf.transformed, "ln(1+z)")):
        with _open_out(path) as fh:
            fh.write(f"# {header}\n# rows: c [N s/m]; columns: k [N/m]; values: {label} weighted loss\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["c\\k"] + [_fmt(k) for k in surf.k_values])
            for c, row in zip(surf.c_values, grid):
                w.writerow([_fmt(c)] + [_fmt(z) for z in row])
    i, j = surf.argmin()
    summary = {
        "argmin": {"c": float(surf.c_values[i]), "k": float(surf.k_values[j]), "i": i, "j": j},
        "loss": float(surf.loss[i, j]),
        "loss_log1p": float(surf.transformed[i, j]),
        "shape": list(surf.loss.shape),
        "config": header,
    }
    _write_json(out.with_suffix(".json"), summary)
    print(f"grid argmin at c = {summary['argmin']['c']:.6g}, k = {summary['argmin']['k']:.6g} (loss {summary['loss']:.6g})")
    return EXIT_OK


def cmd_energy(cfg: RunConfig, args) -> int:
    out = _require_out(args)
    try:
        parts = extrapolate(cfg.params(), args.altitudes, cfg.clearance())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with _open_out(out) as fh:
        fh.write(f"# {cfg.provenance('energy')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["altitude_cm", "E_total_J", "E_spring_J", "E_damper_J", "E_collision_J",
             "frac_spring", "frac_damper", "frac_collision", "collided"]
        )
        for p in parts:
            w.writerow(
                [_fmt(p.altitude * 100), _fmt(p.E_total), _fmt(p.E_spring), _fmt(p.E_damper), _fmt(p.E_collision),
                 _fmt(p.frac_spring), _fmt(p.frac_damper), _fmt(p.frac_collision), str(p.collided).lower()]
            )
    print(f"wrote {len(parts)} partitions to {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "segment": cmd_segment,
    "fit-stiffness": cmd_fit_stiffness,
    "fit-damping": cmd_fit_damping,
    "loss-surface": cmd_loss_surface,
    "energy": cmd_energy,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"msdimpact {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"msdimpact {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
