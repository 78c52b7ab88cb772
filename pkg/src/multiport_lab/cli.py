"""Command-line entry point: ``multiport-lab {compile,scan,coverage,stabilize,report}``.

Config files are JSON with angles in degrees; everything below this module
works in radians. Exit codes: 0 success, 2 validation failure, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import coverage as cov
from .experiment import (
    GridSpec,
    find_extrema,
    perfect_correlations,
    phase_sensitivity,
    scan_correlation_map,
)
from .linalg import (
    Unitary,
    dft_matrix,
    distance_up_to_global_phase,
    entanglement_entropy,
    matrix_from_json,
    unitarity_defect,
)
from .mesh import (
    Imperfections,
    compile_unitary,
    extinction_to_visibility,
    forward_unitary,
    nearest_realizable,
    visibility_to_extinction,
)
from .source import DriftModel, SourceConfig, entangled_state
from .stabilize import StabilizerConfig, lock_quality_to_fidelity, required_detectors, run_lock

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3
ROUND_TRIP_TOL = 1e-9

REFERENCE_GAMMA = 1.41
REFERENCE_MEAN_SENSITIVITY = 0.703


class ValidationFailure(Exception):
    pass


class NumericalFailure(Exception):
    pass


_number_or_inf = {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]}
_matrix = {
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "entries": {"type": "array", "items": {"type": "array", "items": {"type": "array"}}},
    },
    "required": ["n", "entries"],
    "additionalProperties": False,
}
_multiport = {
    "type": "object",
    "properties": {"preset": {"enum": ["bellport", "identity"]}, "matrix": _matrix},
    "additionalProperties": False,
    "minProperties": 1,
    "maxProperties": 1,
}
_angles = {"type": "array", "items": {"type": "number"}}

SCHEMAS: dict[str, dict] = {
    "compile": {
        "type": "object",
        "properties": {
            "n": {"type": "integer", "minimum": 1},
            "preset": {"enum": ["bellport", "identity"]},
            "matrix": _matrix,
            "extinction_dB": _number_or_inf,
        },
        "additionalProperties": False,
    },
    "scan": {
        "type": "object",
        "properties": {
            "source": {
                "type": "object",
                "properties": {
                    "n": {"type": "integer", "minimum": 3},
                    "amplitudes": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "phases_a_deg": _angles,
                    "phases_b_deg": _angles,
                    "pair_rate": {"type": "number", "minimum": 0},
                    "singles_a": {"type": "number", "minimum": 0},
                    "singles_b": {"type": "number", "minimum": 0},
                    "window": {"type": "number", "minimum": 0},
                    "integration": {"type": "number", "minimum": 0},
                },
                "additionalProperties": False,
            },
            "multiport_a": _multiport,
            "multiport_b": _multiport,
            "grid": {
                "type": "object",
                "properties": {
                    "nx": {"type": "integer", "minimum": 2},
                    "ny": {"type": "integer", "minimum": 2},
                    "x_start_deg": {"type": "number"},
                    "y_start_deg": {"type": "number"},
                },
                "additionalProperties": False,
            },
            "offsets_deg": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "all_pairs": {"type": "boolean"},
            "sampling": {"type": "boolean"},
            "seed": {"type": "integer", "minimum": 0},
        },
        "additionalProperties": False,
    },
    "coverage": {
        "type": "object",
        "properties": {
            "n_range": {
                "type": "array",
                "items": {"type": "integer", "minimum": 2},
                "minItems": 2,
                "maxItems": 2,
            },
            "extinction_dB": {"type": "array", "items": _number_or_inf, "minItems": 1},
            "samples": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
            "workers": {"type": "integer", "minimum": 1},
        },
        "additionalProperties": False,
    },
    "stabilize": {
        "type": "object",
        "properties": {
            "n": {"type": "integer", "minimum": 2},
            "wavelengths_nm": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
            "gains": {
                "type": "object",
                "properties": {"kp": {"type": "number"}, "ki": {"type": "number"}, "kd": {"type": "number"}},
                "additionalProperties": False,
            },
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "duration": {"type": "number", "exclusiveMinimum": 0},
            "sigma": {"type": "number", "minimum": 0},
            "setpoints_deg": _angles,
            "initial_errors_deg": _angles,
            "visibility": {"type": "number", "minimum": 0, "maximum": 1},
            "seed": {"type": "integer", "minimum": 0},
            "fidelity_samples": {"type": "integer", "minimum": 1},
        },
        "additionalProperties": False,
    },
    "report": {
        "type": "object",
        "properties": {"n": {"type": "integer", "minimum": 3}},
        "additionalProperties": False,
    },
}

DEFAULTS: dict[str, dict] = {
    "compile": {"n": 3},
    "scan": {
        "source": {
            "n": 3,
            "pair_rate": 225.0,
            "singles_a": 2.0e4,
            "singles_b": 2.0e4,
            "window": 2.5e-9,
            "integration": 8.0,
        },
        "multiport_a": {"preset": "bellport"},
        "multiport_b": {"preset": "bellport"},
        "grid": {"nx": 36, "ny": 30, "x_start_deg": 0.0, "y_start_deg": 0.0},
        "offsets_deg": [0.0, 0.0],
        "all_pairs": False,
        "sampling": True,
        "seed": 0,
    },
    "coverage": {
        "n_range": [2, 12],
        "extinction_dB": [20.0, 30.0, 40.0],
        "samples": cov.DEFAULT_SAMPLES,
        "seed": 0,
        "workers": 1,
    },
    "stabilize": {
        "n": 3,
        "wavelengths_nm": [765.0, 785.0],
        "gains": {"kp": 0.8, "ki": 5.0, "kd": 0.0},
        "dt": 1e-3,
        "duration": 10.0,
        "sigma": 0.5,
        "visibility": 1.0,
        "seed": 0,
        "fidelity_samples": 20000,
    },
    "report": {"n": 3},
}


_REPLACE_KEYS = {"multiport_a", "multiport_b"}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key in _REPLACE_KEYS:
            out[key] = value
        elif isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(command: str, path: str | None) -> dict:
    """Read, validate, and expand a command config (defaults filled in)."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationFailure(f"cannot read config {path}: {exc}") from exc
    validate(command, doc)
    return _merge(DEFAULTS[command], doc)


def validate(command: str, doc: Any) -> None:
    try:
        jsonschema.validate(doc, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationFailure(f"invalid {command} config at {where}: {exc.message}") from exc


def _er(value: Any) -> float:
    return math.inf if value == "inf" else float(value)


def _unitary_from_spec(spec: dict, n: int) -> Unitary:
    if "preset" in spec:
        return dft_matrix(n) if spec["preset"] == "bellport" else Unitary(np.eye(n))
    return _checked_unitary(matrix_from_json(spec["matrix"]))


def _checked_unitary(m: np.ndarray) -> Unitary:
    if m.shape[0] != m.shape[1]:
        raise ValidationFailure("matrix is not square")
    defect, (i, j) = unitarity_defect(m)
    if not defect <= 1e-10:
        raise ValidationFailure(
            f"matrix is not unitary: worst entry of U^dagger U - I at ({i}, {j}), |deviation| = {defect:.3e}"
        )
    return Unitary(m)


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _jsonable(x: Any) -> Any:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def cmd_compile(args: argparse.Namespace) -> int:
    cfg = load_config("compile", args.config)
    if args.preset:
        cfg["preset"] = args.preset
    if args.extinction is not None:
        cfg["extinction_dB"] = _jsonable(args.extinction)
    if args.input:
        try:
            doc = json.loads(Path(args.input).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationFailure(f"cannot read unitary {args.input}: {exc}") from exc
        try:
            jsonschema.validate(doc, _matrix)
            m = matrix_from_json(doc)
        except (jsonschema.ValidationError, ValueError) as exc:
            raise ValidationFailure(f"malformed unitary file: {exc}") from exc
        cfg.pop("preset", None)
        cfg["matrix"] = doc
        cfg["n"] = int(doc["n"])
        u = _checked_unitary(m)
    elif "matrix" in cfg:
        u = _checked_unitary(matrix_from_json(cfg["matrix"]))
        cfg["n"] = u.n
    else:
        cfg.setdefault("preset", "bellport")
        u = _unitary_from_spec({"preset": cfg["preset"]}, cfg["n"])

    settings = compile_unitary(u)
    realized = forward_unitary(settings)
    distance = distance_up_to_global_phase(u.matrix, realized.matrix)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "settings.json", settings.to_json())
    _write_json(out / "realized.json", realized.to_json())
    report = {
        "effective_config": {k: _jsonable(v) for k, v in cfg.items()},
        "n": u.n,
        "units": len(settings.units),
        "parameter_count": settings.parameter_count,
        "reflectivities": settings.reflectivities.tolist(),
        "round_trip_distance": distance,
    }
    if "extinction_dB" in cfg:
        er = _er(cfg["extinction_dB"])
        clipped, realized_c, dist_c = nearest_realizable(u, Imperfections(extinction_dB=er))
        _write_json(out / "settings_clipped.json", clipped.to_json())
        _write_json(out / "realized_clipped.json", realized_c.to_json())
        report["nearest_realizable"] = {"extinction_dB": _jsonable(er), "distance": dist_c}
    _write_json(out / "compile_report.json", report)
    print(f"compiled n={u.n}: {len(settings.units)} units, round-trip distance {distance:.3e}")
    if not distance <= ROUND_TRIP_TOL:
        raise NumericalFailure(f"round-trip distance {distance:.3e} exceeds {ROUND_TRIP_TOL:g}")
    return EXIT_OK


def _source_from_cfg(src: dict) -> SourceConfig:
    n = src["n"]
    kwargs = {k: src[k] for k in ("pair_rate", "singles_a", "singles_b", "window", "integration")}
    if "amplitudes" in src:
        kwargs["amplitudes"] = src["amplitudes"]
    for key in ("phases_a", "phases_b"):
        if key + "_deg" in src:
            kwargs[key] = [math.radians(p) for p in src[key + "_deg"]]
    return SourceConfig(n=n, **kwargs)


def cmd_scan(args: argparse.Namespace) -> int:
    cfg = load_config("scan", args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.no_sampling:
        cfg["sampling"] = False
    if args.preset:
        cfg["multiport_a"] = cfg["multiport_b"] = {"preset": args.preset}
    try:
        source = _source_from_cfg(cfg["source"])
        n = source.n
        u_a = _unitary_from_spec(cfg["multiport_a"], n)
        u_b = _unitary_from_spec(cfg["multiport_b"], n)
        if u_a.n != n or u_b.n != n:
            raise ValidationFailure("multiport dimension does not match the source")
        g = cfg["grid"]
        grid = GridSpec(g["nx"], g["ny"], math.radians(g["x_start_deg"]), math.radians(g["y_start_deg"]))
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    offsets = tuple(math.radians(v) for v in cfg["offsets_deg"])
    cmap = scan_correlation_map(
        source, u_a, u_b, grid, sampling=cfg["sampling"], seed=cfg["seed"], offsets=offsets,
        all_pairs=cfg["all_pairs"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "correlation_map.csv").write_text(cmap.to_csv())
    fits = cmap.fits()
    extrema = find_extrema(cmap)
    tracked = cmap.pairs
    summary = {
        "effective_config": cfg,
        "meta": {**cmap.meta, "points": int(cmap.grid_x.size * cmap.grid_y.size)},
        "pairs": [list(p) for p in tracked],
        "fits": [
            {"phi_x_deg": round(math.degrees(x), 9), "pair": list(tracked[p]), **fits[ix][p].to_json()}
            for ix, x in enumerate(cmap.grid_x)
            for p in range(len(tracked))
        ],
        "max_fit_residual": max(f.rms_residual for row in fits for f in row),
        "extrema": extrema.to_json(),
    }
    if cfg["sampling"]:
        counts_fits = cmap.fits(use_counts=True)
        summary["count_fits"] = [
            {"phi_x_deg": round(math.degrees(x), 9), "pair": list(tracked[p]), **counts_fits[ix][p].to_json()}
            for ix, x in enumerate(cmap.grid_x)
            for p in range(len(tracked))
        ]
    pc = perfect_correlations(cmap.model, grid)
    summary["perfect_correlations"] = {
        "found": [list(p) for p in pc["perfect"]],
        "count": len(pc["perfect"]),
        "possible": math.factorial(n),
    }
    _write_json(out / "scan.json", summary)
    offs = ", ".join(f"({dx:.1f}, {dy:.1f})" for dx, dy in extrema.offsets_deg())
    print(f"scan: {summary['meta']['points']} points; maxima offsets (deg): {offs}")
    return EXIT_OK


def cmd_coverage(args: argparse.Namespace) -> int:
    cfg = load_config("coverage", args.config)
    if args.extinction is not None:
        cfg["extinction_dB"] = [_jsonable(args.extinction)]
    if args.samples is not None:
        cfg["samples"] = args.samples
    if args.seed is not None:
        cfg["seed"] = args.seed
    validate("coverage", cfg)
    lo, hi = cfg["n_range"]
    if hi < lo:
        raise ValidationFailure(f"malformed n_range {cfg['n_range']}: max below min")
    ers = [_er(e) for e in cfg["extinction_dB"]]
    table = cov.coverage_curve(range(lo, hi + 1), ers, cfg["samples"], cfg["seed"], cfg["workers"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "coverage.csv").write_text(cov.curve_to_csv(table))
    _write_json(
        out / "coverage.json",
        {"effective_config": cfg, "table": [cov.estimate_to_json(r) for r in table]},
    )
    for row in table:
        print(f"n={row.n:3d} ER={row.extinction_dB:>6} dB  coverage={row.fraction:.4f} +/- {row.std_error:.4f}")
    return EXIT_OK


def cmd_stabilize(args: argparse.Namespace) -> int:
    cfg = load_config("stabilize", args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    g = cfg["gains"]
    try:
        sc = StabilizerConfig(
            n=cfg["n"],
            wavelengths=tuple(cfg["wavelengths_nm"]),
            gains=(g["kp"], g["ki"], g["kd"]),
            dt=cfg["dt"],
            drift=DriftModel(cfg["sigma"]),
            duration=cfg["duration"],
            setpoints=[math.radians(v) for v in cfg["setpoints_deg"]] if "setpoints_deg" in cfg else None,
            initial_errors=(
                [math.radians(v) for v in cfg["initial_errors_deg"]] if "initial_errors_deg" in cfg else None
            ),
            visibility=cfg["visibility"],
        )
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    telemetry = run_lock(sc, cfg["seed"])
    rms = float(np.max(telemetry.residual_rms))
    fid = lock_quality_to_fidelity(rms, SourceConfig(n=sc.n), cfg["fidelity_samples"], cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "telemetry.csv").write_text(telemetry.to_csv())
    _write_json(
        out / "stabilize.json",
        {
            "effective_config": cfg,
            "loops": sc.loops,
            "required_detectors": required_detectors(sc.n),
            "residual_rms_rad": telemetry.residual_rms.tolist(),
            "max_residual_rms_rad": rms,
            "diverged": telemetry.diverged,
            "fidelity_under_residual_jitter": fid,
        },
    )
    print(f"stabilize: residual RMS {rms:.4g} rad, fidelity {fid:.5f}, diverged={telemetry.diverged}")
    return EXIT_OK


def theory_report(n: int = 3) -> dict:
    """Headline model numbers for the Bellport experiment."""
    source = SourceConfig(n=n)
    f = dft_matrix(n)
    cmap = scan_correlation_map(source, f, f, sampling=False)
    extrema = find_extrema(cmap)
    pc = perfect_correlations(cmap.model)
    s_n = phase_sensitivity(n)
    s_2 = phase_sensitivity(2)
    damping = REFERENCE_MEAN_SENSITIVITY / s_n
    return {
        "n": n,
        "entanglement_entropy_ebits": entanglement_entropy(entangled_state(source)),
        "maxima_offsets_deg": [list(o) for o in extrema.offsets_deg()],
        "maxima_probabilities": [m.probability for m in extrema.maxima],
        "perfect_correlations": len(pc["perfect"]),
        "possible_correlations": math.factorial(n),
        "phase_sensitivity": s_n,
        "phase_sensitivity_two_path": s_2,
        "sensitivity_ratio": s_n / s_2,
        "damped_sensitivity_ratio": phase_sensitivity(n, damping) / s_2,
        "reference_measured_gamma": REFERENCE_GAMMA,
        "required_detectors": required_detectors(n),
        "visibility_at_14.2dB": extinction_to_visibility(14.2),
        "extinction_dB_at_visibility_0.963": visibility_to_extinction(0.963),
    }


def cmd_report(args: argparse.Namespace) -> int:
    cfg = load_config("report", args.config)
    report = {"effective_config": cfg, **theory_report(cfg["n"])}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report)
    for key, value in report.items():
        if key != "effective_config":
            print(f"{key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiport-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")

    p = sub.add_parser("compile", help="compile a unitary into mesh settings")
    common(p)
    p.add_argument("input", nargs="?", help="unitary JSON file ({'n', 'entries': [[re, im], ...]})")
    p.add_argument("--preset", choices=["bellport", "identity"])
    p.add_argument("--extinction", type=float, metavar="DB", help="also report the nearest realizable unitary")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("scan", help="scan the two-phase correlation map")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-sampling", action="store_true", help="expected probabilities only")
    p.add_argument("--preset", choices=["bellport", "identity"])
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("coverage", help="estimate unitary-space coverage")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--extinction", type=float, metavar="DB")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("stabilize", help="simulate the phase-lock loops")
    common(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("report", help="print headline model numbers")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
