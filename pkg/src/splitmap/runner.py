"""Scenario execution: build -> poisson -> direction -> splitting -> artifacts.

A run writes frame.json, report.json, CSV tables, SVG plots, a log, and the
resolved config echo into its output directory, atomically (temp file +
rename).  Floating-point fields are serialized with fixed 17-significant-
digit formatting so re-runs with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svgplot
from .config import ScenarioConfig, apply_overrides, parse_config
from .direction import (
    NetConstructionError,
    find_direction_points,
    projection_diagnostics,
    residual_diameter,
    stratified_defect_stats,
)
from .fields import Ball
from .gougu import bad_set_measure
from .manifold import GeometryError, build_manifold
from .splitting import splitting_report

SCHEMA_VERSION = 1


@dataclass
class RunArtifacts:
    out_dir: str
    frame_path: str
    report_path: str
    csv_paths: list = field(default_factory=list)
    svg_paths: list = field(default_factory=list)
    log_path: str = ""
    config_path: str = ""
    partial: bool = False
    failed: bool = False
    error: str = ""
    headline_epsilon: float = math.nan
    quasi_gap: float = math.nan

    def exit_code(self) -> int:
        if self.failed:
            return 1
        return 2 if self.partial else 0


# ---------------------------------------------------------------- json text


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


_FLOAT_MARK = "@@F17@@"
_FLOAT_RE = re.compile(r'"@@F17@@([^"]*)"')


def _mark_floats(obj):
    if isinstance(obj, dict):
        return {k: _mark_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_mark_floats(v) for v in obj]
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return f"{_FLOAT_MARK}{format(obj, '.17g')}"
    return obj


def dump_json_17(obj) -> str:
    """JSON text with every float printed at fixed 17 significant digits."""
    marked = _mark_floats(_clean(obj))
    text = json.dumps(marked, sort_keys=True, indent=1)
    return _FLOAT_RE.sub(r"\1", text)


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------- run


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path, label: str = "run") -> RunArtifacts:
    """Execute the full pipeline for one scenario; always writes artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_lines: list[str] = []
    t0 = time.time()
    art = RunArtifacts(out_dir=str(out), frame_path="", report_path="")

    def log(msg: str) -> None:
        log_lines.append(f"[{time.time() - t0:8.2f}s] {msg}")

    config_path = out / "config.json"
    _atomic_write(config_path, dump_json_17({"schema_version": SCHEMA_VERSION, "config": cfg.echo()}))
    art.config_path = str(config_path)

    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "label": label,
        "config": cfg.echo(),
        "partial": False,
        "errors": [],
    }
    try:
        log("building manifold")
        m = build_manifold(cfg.manifold_spec())
        p = m.center
        r = float(cfg.construction["ball_radius"])
        doc["manifold"] = {
            "kind": m.kind,
            "dimension": m.n,
            "domain_radius": m.domain_radius if math.isfinite(m.domain_radius) else "inf",
            "volume_ratio_at_r": m.ball_volume(p, r).ratio,
        }
        log("constructing direction frame")
        frame = find_direction_points(m, p, r, cfg.frame_config())
        doc["frame"] = frame.to_dict()
        art.partial |= frame.collapsed

        log("direction diagnostics")
        diag = projection_diagnostics(frame)
        resid = residual_diameter(frame)
        doc["direction"] = {
            "projection_table": diag.rows,
            "gammas": diag.gammas,
            "residual_diameter": resid.__dict__,
            "stratified": [
                stratified_defect_stats(frame, k, pair_count=120, seed=int(cfg.sampling["seed"])).__dict__
                for k in range(1, len(frame.levels) + 1)
            ],
        }
        log("bad-set measures")
        doc["bad_sets"] = [
            bad_set_measure(
                m, lev.q, lev.d, Ball(p, lev.r_q), count=2000, tag=f"badset-{lev.index}"
            ).__dict__
            for lev in frame.levels
        ]
        log("splitting report")
        rep = splitting_report(m, frame, cfg.splitting_config())
        doc["report"] = rep.to_dict()
        doc["partial"] = bool(art.partial or rep.partial)
        doc["errors"] = rep.errors
        art.partial = doc["partial"]
        art.headline_epsilon = rep.headline_epsilon
        if rep.quasi.count:
            art.quasi_gap = max(rep.quasi.max_ratio - 1.0, 1.0 - rep.quasi.min_ratio)
        log(f"headline epsilon = {rep.headline_epsilon}")
    except (GeometryError, NetConstructionError, ValueError) as exc:
        art.failed = True
        art.error = f"{type(exc).__name__}: {exc}"
        doc["errors"] = doc.get("errors", []) + [art.error]
        doc["partial"] = True
        log(f"pipeline failure: {art.error}")

    log(f"total runtime {time.time() - t0:.3f}s")

    frame_path = out / "frame.json"
    report_path = out / "report.json"
    _atomic_write(frame_path, dump_json_17(doc.get("frame", {})))
    _atomic_write(report_path, dump_json_17(doc))
    art.frame_path = str(frame_path)
    art.report_path = str(report_path)

    formats = cfg.output.get("formats", ["json", "csv", "svg"])
    if "csv" in formats:
        art.csv_paths = _write_csvs(out, doc)
    if "svg" in formats and not art.failed:
        art.svg_paths = emit_plots([str(report_path)], out)

    log_path = out / "run.log"
    _atomic_write(log_path, "\n".join(log_lines) + "\n")
    art.log_path = str(log_path)
    return art


def _write_csvs(out: Path, doc: dict) -> list[str]:
    paths = []
    rep = doc.get("report")

    def write(name: str, header: list[str], rows: list[list]) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
        _atomic_write(out / name, buf.getvalue())
        paths.append(str(out / name))

    summary_rows = [
        ["partial", doc.get("partial")],
    ]
    if rep:
        summary_rows += [
            ["headline_epsilon", rep["headline_epsilon"]],
            ["r1", rep["r1"]],
            ["quasi_min_ratio", rep["quasi"]["min_ratio"]],
            ["quasi_max_ratio", rep["quasi"]["max_ratio"]],
        ]
        for i, g in enumerate(rep["grad_sup_b"]):
            summary_rows.append([f"grad_sup_b{i+1}", g])
    write("summary.csv", ["key", "value"], summary_rows)

    if rep:
        n = len(rep["gram_b"])
        rows = []
        for i in range(n):
            for j in range(n):
                rows.append([i + 1, j + 1, rep["gram_b"][i][j], rep["gram_b_plus"][i][j]])
        write("gram.csv", ["i", "j", "gram_b", "gram_b_plus"], rows)
        edges = rep["quasi"]["histogram_edges"]
        counts = rep["quasi"]["histogram_counts"]
        if counts:
            write(
                "quasi_histogram.csv",
                ["bin_lo", "bin_hi", "count"],
                [[edges[k], edges[k + 1], counts[k]] for k in range(len(counts))],
            )
    levels = doc.get("frame", {}).get("levels", [])
    if levels:
        write(
            "levels.csv",
            ["index", "d", "r_q", "achieved_ratio", "net_points", "net_bad_rejected"],
            [
                [
                    lv["index"],
                    lv["d"],
                    lv["r_q"],
                    lv["achieved_ratio"] if lv["achieved_ratio"] is not None else "",
                    len(lv["net_points"]),
                    lv["net_bad_rejected"],
                ]
                for lv in levels
            ],
        )
    return paths


# ---------------------------------------------------------------- plots


def emit_plots(report_paths: list[str], out_dir: str | Path) -> list[str]:
    """SVG views of one or more report documents (CSV stays canonical)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    docs = []
    for path in report_paths:
        p = Path(path)
        if not p.exists():
            raise RunnerError(f"missing report {path}")
        docs.append((p, json.loads(p.read_text())))

    for p, doc in docs:
        rep = doc.get("report")
        if not rep:
            continue
        notes = ["partial"] if doc.get("partial") else []
        stem = p.stem if len(docs) > 1 else "report"
        gram = [
            [v if isinstance(v, (int, float)) else math.nan for v in row] for row in rep["gram_b"]
        ]
        svg = svgplot.heat_map(gram, "Gram deviation integrals of harmonic components", notes)
        path = out / f"{stem}_gram.svg"
        _atomic_write(path, svg)
        written.append(str(path))
        if rep["quasi"]["histogram_counts"]:
            svg = svgplot.histogram(
                rep["quasi"]["histogram_edges"],
                rep["quasi"]["histogram_counts"],
                "Distance-map ratio histogram",
                "|psi(x)-psi(y)| / d(x,y)",
                notes,
            )
            path = out / f"{stem}_quasi.svg"
            _atomic_write(path, svg)
            written.append(str(path))

    if len(docs) > 1:
        pts = []
        for p, doc in docs:
            knob = doc.get("sweep_value")
            eps = doc.get("report", {}).get("headline_epsilon")
            if knob is not None and isinstance(eps, (int, float)):
                pts.append((float(knob), float(eps)))
        pts.sort()
        if pts:
            svg = svgplot.line_plot(
                pts, "headline epsilon vs knob", doc.get("sweep_axis", "knob"), "epsilon"
            )
            path = out / "sweep_epsilon.svg"
            _atomic_write(path, svg)
            written.append(str(path))
    return written


class RunnerError(ValueError):
    pass


# ---------------------------------------------------------------- sweep


def _sweep_one(args):
    doc, axis, value, out_dir, label = args
    cfg = parse_config(doc)
    cfg = apply_overrides(cfg, [f"{axis}={value}"])
    art = run_scenario(cfg, out_dir, label=label)
    # annotate the report with the sweep coordinate
    rp = Path(art.report_path)
    body = json.loads(rp.read_text())
    body["sweep_axis"] = axis
    body["sweep_value"] = value
    _atomic_write(rp, dump_json_17(body))
    return art


def sweep(cfg: ScenarioConfig, axis: str, values: list[float], out_dir: str | Path, threads: int = 0):
    """One run per knob value (shared seed); combined CSV + plot."""
    if not values:
        raise RunnerError("sweep needs a non-empty value list")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = cfg.echo()
    jobs = [
        (doc, axis, v, str(out / f"{axis.split('.')[-1]}-{v:g}"), f"{axis}={v:g}") for v in values
    ]
    arts: list[RunArtifacts] = []
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            arts = list(pool.map(_sweep_one, jobs))
    else:
        arts = [_sweep_one(j) for j in jobs]

    rows = []
    for v, art in sorted(zip(values, arts), key=lambda t: t[0]):
        rows.append(
            [
                v,
                format(art.headline_epsilon, ".17g"),
                format(art.quasi_gap, ".17g"),
                "failed" if art.failed else ("partial" if art.partial else "ok"),
            ]
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "headline_epsilon", "quasi_gap", "status"])
    w.writerows(rows)
    _atomic_write(out / "sweep.csv", buf.getvalue())

    emit_plots([a.report_path for a in arts if not a.failed], out)
    return arts
