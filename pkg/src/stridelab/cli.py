"""Command-line front end.

Four subcommands cover the study workflow:

    stridelab simulate walks.ini --out-dir data/
        Synthesize walks from an INI file (one section per walk) into
        ``<id>.poses.json`` plus a ``<id>.truth.json`` sidecar each.

    stridelab analyze data/*.poses.json --out-dir results/
        Run the fitting and step-detection pipeline on each pose stream and
        write ``<name>.gait.csv``, a JSON run report, and, when truth
        sidecars sit next to the inputs, a long-format matched CSV pairing
        the pipeline's numbers ("video") against the sidecar's ("truth").

    stridelab agree results/results.matched.csv --reference truth --out-dir tables/
        Method-agreement statistics per gait parameter: a JSON report, a
        summary CSV shaped like a publication table, and one Bland-Altman
        SVG per method/parameter pair.

    stridelab report tables/agreement.json --out-dir tables/
        Re-render the CSV and SVG outputs from an existing agreement report.

Exit codes: 0 on success, 1 when a command ran but produced no usable
result (every walk failed, no parameter had enough pairs), 2 for usage or
configuration errors.  All outputs are deterministic: the same inputs,
config, and seeds produce byte-identical files.  No command modifies its
inputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields as dataclass_fields
from itertools import repeat
from pathlib import Path
from typing import Optional, Sequence

from . import pose_io, stats
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    MissingHeaderField,
    MissingModality,
    StrideLabError,
)
from .events import detect_steps
from .optimizer import optimize
from .plots import bland_altman_svg
from .report import GaitReport, compute_report
from .skeleton import derive_anatomy
from .walker import WalkerSpec, generate

__all__ = ["main"]

_PIPELINE_METHOD = "video"
_TRUTH_METHOD = "truth"

_PARAM_UNITS = {
    "gait_speed_m_s": "m/s",
    "cadence_steps_min": "steps/min",
    "step_length_cm": "cm",
    "step_time_s": "s",
}
_PARAM_LABELS = {
    "gait_speed_m_s": "gait speed",
    "cadence_steps_min": "cadence",
    "step_length_cm": "step length",
    "step_time_s": "step time",
}


def _round10(v: float) -> float:
    return float("%.10g" % float(v))


def _slug(text: str) -> str:
    out = re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-.")
    return out or "x"


# ---------------------------------------------------------------------------
# simulate

_WALK_FIELDS = {f.name: f.type for f in dataclass_fields(WalkerSpec)}


def _parse_walk_section(walk_id: str, section) -> WalkerSpec:
    kwargs: dict = {}
    for key, raw in section.items():
        if key not in _WALK_FIELDS:
            raise ConfigError(f"walk spec [{walk_id}]: unknown key {key!r}")
        try:
            kwargs[key] = int(raw, 10) if key == "seed" else float(raw)
        except ValueError:
            raise ConfigError(
                f"walk spec [{walk_id}] {key}: expected a number, got {raw!r}"
            ) from None
    try:
        return WalkerSpec(**kwargs)
    except (ValueError, StrideLabError) as exc:
        raise ConfigError(f"walk spec [{walk_id}]: {exc}") from None


def _cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    parser = configparser.ConfigParser()
    try:
        with open(args.walks, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read walk specs {args.walks}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed walk specs {args.walks}: {exc}") from None
    if not parser.sections():
        raise ConfigError(f"walk specs {args.walks}: no walk sections")

    specs: list[tuple[str, WalkerSpec]] = []
    for sid in parser.sections():
        if _slug(sid) != sid:
            raise ConfigError(
                f"walk spec [{sid}]: section name must be filename-safe"
            )
        specs.append((sid, _parse_walk_section(sid, parser[sid])))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for walk_id, spec in specs:
        seq, truth = generate(spec, camera=cfg.camera)
        (out_dir / f"{walk_id}.poses.json").write_bytes(pose_io.write_stream(seq))
        (out_dir / f"{walk_id}.truth.json").write_bytes(pose_io.write_truth(truth))
        n = len(seq.frames_3d or seq.frames_2d or ())
        print(f"{walk_id}: wrote {n} frames ({truth.n_steps} steps)")
    return 0


# ---------------------------------------------------------------------------
# analyze

def _walk_id_for(path: Path) -> str:
    name = path.name
    return name[: -len(".poses.json")] if name.endswith(".poses.json") else path.stem


def _analyze_one(path_str: str, cfg: RunConfig) -> dict:
    """Process one pose stream; returns a JSON-ready result row."""
    path = Path(path_str)
    row: dict = {"walk_id": _walk_id_for(path), "file": path.name}
    try:
        seq = pose_io.parse_stream(path.read_bytes())
        if seq.frames_3d is None:
            raise MissingModality("stream has no 3D joints to analyze")
        if seq.subject_height_m is None:
            raise MissingHeaderField(
                "header field 'subject_height_m' is required for analysis"
            )
        anatomy = derive_anatomy(seq.subject_height_m, cfg.ratios)
        fitted = optimize(seq, anatomy, camera=cfg.camera, cfg=cfg.energy)
        detection = detect_steps(fitted, cfg.detector)
        rep = compute_report(detection)
    except (StrideLabError, OSError) as exc:
        row["status"] = "error"
        row["error"] = {"type": type(exc).__name__, "message": str(exc)}
        return row
    row["status"] = "ok"
    row["source"] = seq.source
    row["converged"] = fitted.converged
    row["iterations"] = fitted.iterations
    row["report"] = {
        "n_events": rep.n_events,
        "steps_used": rep.steps_used,
        "duration_used_s": _round10(rep.duration_used_s),
        "gait_speed_m_s": _round10(rep.gait_speed_m_s),
        "cadence_steps_min": _round10(rep.cadence_steps_min),
        "step_length_cm": _round10(rep.step_length_cm),
        "step_time_s": _round10(rep.step_time_s),
        "travel_m": _round10(rep.travel_m),
    }
    return row


def _truth_records(poses_path: Path, walk_id: str) -> list[tuple[str, str, str, str, float]]:
    sidecar = poses_path.with_name(f"{walk_id}.truth.json")
    if not sidecar.exists():
        return []
    doc = pose_io.read_truth(sidecar.read_bytes())
    values = {
        "gait_speed_m_s": doc["speed_m_s"],
        "cadence_steps_min": doc["cadence_steps_min"],
        "step_length_cm": 100.0 * doc["step_length_m"],
        "step_time_s": doc["step_time_s"],
    }
    return [
        (walk_id, walk_id, _TRUTH_METHOD, param, float(v))
        for param, v in values.items()
    ]


def _cmd_analyze(args: argparse.Namespace, cfg: RunConfig) -> int:
    paths = [Path(p) for p in args.poses]
    if args.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_analyze_one, map(str, paths), repeat(cfg)))
    else:
        rows = [_analyze_one(str(p), cfg) for p in paths]

    gait_entries: list[tuple[str, str, GaitReport]] = []
    matched: list[tuple[str, str, str, str, float]] = []
    for path, row in zip(paths, rows):
        if row["status"] != "ok":
            err = row["error"]
            print(f"{row['walk_id']}: error {err['type']}: {err['message']}")
            continue
        rep = row["report"]
        print(
            f"{row['walk_id']}: ok speed={rep['gait_speed_m_s']:.3f} m/s "
            f"cadence={rep['cadence_steps_min']:.1f} steps/min "
            f"({rep['steps_used']} steps)"
        )
        for param in _PARAM_UNITS:
            matched.append(
                (row["walk_id"], row["walk_id"], _PIPELINE_METHOD, param, rep[param])
            )
        try:
            matched.extend(_truth_records(path, row["walk_id"]))
        except StrideLabError as exc:
            print(
                f"{row['walk_id']}: ignoring truth sidecar: {exc}", file=sys.stderr
            )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": 1, "walks": rows}
    (out_dir / f"{args.name}.report.json").write_bytes(
        json.dumps(doc, indent=1).encode("utf-8") + b"\n"
    )

    ok_rows = [r for r in rows if r["status"] == "ok"]
    for row in ok_rows:
        rep = row["report"]
        gait_entries.append(
            (
                row["walk_id"],
                row["source"],
                GaitReport(
                    n_events=rep["n_events"],
                    steps_used=rep["steps_used"],
                    duration_used_s=rep["duration_used_s"],
                    gait_speed_m_s=rep["gait_speed_m_s"],
                    cadence_steps_min=rep["cadence_steps_min"],
                    step_length_cm=rep["step_length_cm"],
                    step_time_s=rep["step_time_s"],
                    step_lengths_cm=(),
                    step_times_s=(),
                    travel_m=rep["travel_m"],
                ),
            )
        )
    with open(out_dir / f"{args.name}.gait.csv", "w", encoding="utf-8", newline="") as fh:
        pose_io.write_gait_csv(fh, gait_entries)
    has_truth = any(rec[2] == _TRUTH_METHOD for rec in matched)
    if has_truth:
        with open(
            out_dir / f"{args.name}.matched.csv", "w", encoding="utf-8", newline=""
        ) as fh:
            pose_io.write_matched_csv(fh, matched)

    n_ok = len(ok_rows)
    print(f"analyzed {n_ok}/{len(paths)} walks")
    return 0 if n_ok else 1


# ---------------------------------------------------------------------------
# agree

def _agreement_entry(pa: stats.ParameterAgreement, table: stats.MeasurementTable) -> dict:
    return {
        "parameter": pa.parameter,
        "unit": pa.unit,
        "n": pa.n,
        "n_excluded": table.n_excluded,
        "mean_ref": _round10(pa.mean_ref),
        "sd_ref": _round10(pa.sd_ref),
        "mean_other": _round10(pa.mean_other),
        "sd_other": _round10(pa.sd_other),
        "icc_2k": _round10(pa.icc_2k),
        "icc_21": _round10(pa.icc_21),
        "icc_31": _round10(pa.icc_31),
        "bias": _round10(pa.bias),
        "bias_ci": [_round10(v) for v in pa.bias_ci],
        "bias_pct": _round10(pa.bias_pct),
        "bias_ci_pct": [_round10(v) for v in pa.bias_ci_pct],
        "loa": [_round10(v) for v in pa.loa],
        "loa_pct": [_round10(v) for v in pa.loa_pct],
        "sd_diff": _round10(pa.sd_diff),
        "percentage_error": _round10(pa.percentage_error),
        "classification": pa.classification,
        "walks": list(table.rows),
        "pairs": [[_round10(a), _round10(b)] for a, b in table.values],
    }


def _repeatability_entries(
    records: Sequence[tuple[str, str, str, str, float]],
    method: str,
    parameter: str,
) -> Optional[dict]:
    """ICC(3,1) across repeated trials, when every subject has the same
    number (at least two) of trials of this method and parameter."""
    trials: dict[str, list[float]] = {}
    for _, subject_id, m, param, value in records:
        if m == method and param == parameter:
            trials.setdefault(subject_id, []).append(value)
    counts = {len(v) for v in trials.values()}
    if len(trials) < 2 or len(counts) != 1 or counts == {1}:
        return None
    k = counts.pop()
    subjects = list(trials)
    table = stats.MeasurementTable(
        values=[trials[s] for s in subjects],
        parameter=parameter,
        unit=_PARAM_UNITS.get(parameter, ""),
        rows=tuple(subjects),
        subjects=tuple(subjects),
        columns=tuple(f"trial {i + 1}" for i in range(k)),
    )
    try:
        value = stats.icc(table, (3, 1))
    except StrideLabError:
        return None
    return {
        "method": method,
        "parameter": parameter,
        "icc_31": _round10(value),
        "n_subjects": len(subjects),
        "n_trials": k,
    }


def _fmt_mean_sd(mean: float, sd: float) -> str:
    return f"{mean:.3g} ({sd:.3g})"


def _fmt_diff_ci(entry: dict) -> str:
    lo, hi = entry["bias_ci_pct"]
    return f"{entry['bias_pct']:.1f} [{lo:.1f}, {hi:.1f}]"


def _render_table_csv(doc: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        [
            "Parameter",
            "Method",
            "n",
            "Reference mean (SD)",
            "Method mean (SD)",
            "ICC(2,k)",
            "ICC(3,1)",
            "Diff [95% CI] in % of mean",
        ]
    )
    for report in doc["reports"]:
        for entry in report["parameters"]:
            label = _PARAM_LABELS.get(entry["parameter"], entry["parameter"])
            unit = entry["unit"]
            name = f"{label} ({unit})" if unit else label
            w.writerow(
                [
                    name,
                    report["other_method"],
                    entry["n"],
                    _fmt_mean_sd(entry["mean_ref"], entry["sd_ref"]),
                    _fmt_mean_sd(entry["mean_other"], entry["sd_other"]),
                    f"{entry['icc_2k']:.2f}",
                    f"{entry['icc_31']:.2f}",
                    _fmt_diff_ci(entry),
                ]
            )
    return buf.getvalue()


def _render_outputs(doc: dict, out_dir: Path, name: str) -> None:
    (out_dir / f"{name}.table1.csv").write_text(
        _render_table_csv(doc), encoding="utf-8", newline=""
    )
    for report in doc["reports"]:
        for entry in report["parameters"]:
            a = [p[0] for p in entry["pairs"]]
            b = [p[1] for p in entry["pairs"]]
            label = _PARAM_LABELS.get(entry["parameter"], entry["parameter"])
            svg = bland_altman_svg(
                a,
                b,
                parameter=label,
                unit=entry["unit"],
                method_a=doc["reference_method"],
                method_b=report["other_method"],
            )
            fname = f"{name}.{_slug(report['other_method'])}.{_slug(entry['parameter'])}.ba.svg"
            (out_dir / fname).write_text(svg, encoding="utf-8", newline="")


def _cmd_agree(args: argparse.Namespace, cfg: RunConfig) -> int:
    with open(args.matched, encoding="utf-8", newline="") as fh:
        records = pose_io.read_matched_csv(fh)
    methods: list[str] = []
    parameters: list[str] = []
    for _, _, method, param, _ in records:
        if method not in methods:
            methods.append(method)
        if param not in parameters:
            parameters.append(param)
    if args.reference not in methods:
        raise ConfigError(
            f"reference method {args.reference!r} not in {args.matched}; "
            f"methods present: {', '.join(methods)}"
        )

    reports = []
    for other in (m for m in methods if m != args.reference):
        entries = []
        repeats = []
        n_excluded = 0
        for param in parameters:
            subset = [r for r in records if r[3] == param]
            try:
                table = stats.MeasurementTable.from_records(
                    ((w, s, m, v) for w, s, m, _, v in subset),
                    parameter=param,
                    unit=_PARAM_UNITS.get(param, ""),
                    columns=(args.reference, other),
                )
                pa = stats.compare_methods(
                    table,
                    resamples=cfg.resamples,
                    level=cfg.bootstrap_level,
                    seed=cfg.seed,
                )
            except (StrideLabError, ValueError) as exc:
                print(
                    f"skipping {param} ({args.reference} vs {other}): {exc}",
                    file=sys.stderr,
                )
                continue
            entries.append(_agreement_entry(pa, table))
            n_excluded += table.n_excluded
            print(
                f"{param} ({args.reference} vs {other}): "
                f"ICC(2,k)={pa.icc_2k:.3f} [{pa.classification}] "
                f"bias={pa.bias:.4g} {pa.unit}"
            )
            for method in (args.reference, other):
                rep = _repeatability_entries(records, method, param)
                if rep is not None:
                    repeats.append(rep)
        if entries:
            reports.append(
                {
                    "other_method": other,
                    "n_excluded": n_excluded,
                    "parameters": entries,
                    "repeatability": repeats,
                }
            )

    if not reports:
        print("no parameter had enough complete pairs", file=sys.stderr)
        return 1

    doc = {
        "schema_version": 1,
        "reference_method": args.reference,
        "resamples": cfg.resamples,
        "bootstrap_level": cfg.bootstrap_level,
        "seed": cfg.seed,
        "reports": reports,
    }
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{args.name}.agreement.json").write_bytes(
        json.dumps(doc, indent=1).encode("utf-8") + b"\n"
    )
    _render_outputs(doc, out_dir, args.name)
    return 0


# ---------------------------------------------------------------------------
# report

def _cmd_report(args: argparse.Namespace, cfg: RunConfig) -> int:
    del cfg  # rendering is fully determined by the stored report
    path = Path(args.agreement)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read agreement report {path}: {exc}") from None
    for key in ("reference_method", "reports"):
        if key not in doc:
            raise ConfigError(f"agreement report {path} lacks {key!r}")
    if not doc["reports"]:
        print("agreement report holds no comparisons", file=sys.stderr)
        return 1
    name = args.name or _slug(path.name.split(".")[0])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        _render_outputs(doc, out_dir, name)
    except (KeyError, TypeError) as exc:
        raise ConfigError(
            f"agreement report {path} is missing fields: {exc!r}"
        ) from None
    n = sum(len(r["parameters"]) for r in doc["reports"])
    print(f"rendered {n} comparisons from {path.name}")
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stridelab",
        description="Markerless gait analysis: synthesize, fit, detect, compare.",
    )
    parser.add_argument("--config", metavar="INI", default=None,
                        help="user config file layered over the shipped defaults")
    parser.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="process up to N walks in parallel (analyze)")
    parser.add_argument("--seed", type=int, default=None, metavar="N",
                        help="override stats.seed from the config")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize walks from an INI spec file")
    p.add_argument("walks", help="INI file, one [walk-id] section per walk")
    p.add_argument("--out-dir", default=".", metavar="DIR")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="fit poses and extract gait parameters")
    p.add_argument("poses", nargs="+", help=".poses.json files")
    p.add_argument("--out-dir", default=".", metavar="DIR")
    p.add_argument("--name", default="results", metavar="NAME",
                   help="basename for the output files")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("agree", help="method agreement from a matched CSV")
    p.add_argument("matched", help="long-format matched CSV")
    p.add_argument("--reference", required=True, metavar="METHOD",
                   help="method name the others are compared against")
    p.add_argument("--out-dir", default=".", metavar="DIR")
    p.add_argument("--name", default="agreement", metavar="NAME")
    p.set_defaults(func=_cmd_agree)

    p = sub.add_parser("report", help="re-render tables and plots from a report")
    p.add_argument("agreement", help="agreement JSON written by `agree`")
    p.add_argument("--out-dir", default=".", metavar="DIR")
    p.add_argument("--name", default=None, metavar="NAME")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    overrides = {}
    if args.seed is not None:
        overrides["stats.seed"] = str(args.seed)
    try:
        cfg = load_config(
            Path(args.config) if args.config else None, overrides
        )
        return args.func(args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
