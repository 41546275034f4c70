"""CSV export of metrics, per-round traces and the resolved configuration.

Output layout under ``out``::

    summary.csv                      one row per scenario
    <scenario>/scenario.conf         resolved config (threshold filled in)
    <scenario>/trace-NNN.csv         per-tick trace of round NNN
    <scenario>/aborted.csv           aborted rounds and diagnostics
    <scenario>/watermark-NNN.csv     emitted watermark per write (optional)

Floats are written with ``repr`` so re-importing gives identical values and
re-exporting gives identical bytes.
"""
from __future__ import annotations

import copy
import csv
import math
import re
from pathlib import Path

from .metrics import MetricsReport
from .runner import TRACE_FIELDS, RoundResult
from .scenario import ScenarioConfig, dump_scenario, load_scenario

SUMMARY_FIELDS = ("scenario", "detection_ratio", "avg_detection_time_s", "fn_ratio", "fp_ratio", "rounds")
ABORTED_FIELDS = ("round", "diagnostic")
WATERMARK_FIELDS = ("tick", "delta_u")
_TRACE_RE = re.compile(r"trace-(\d+)\.csv$")


class ExportError(OSError):
    pass


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def write_summary(reports, path) -> Path:
    path = Path(path)
    _write_csv(path, SUMMARY_FIELDS, (r.summary_row() for r in reports))
    return path


def read_summary(path) -> list[MetricsReport]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsReport(row["scenario"], float(row["detection_ratio"]),
                                     float(row["avg_detection_time_s"]), float(row["fn_ratio"]),
                                     float(row["fp_ratio"]), int(row["rounds"])))
    return out


def write_trace(result: RoundResult, path) -> Path:
    path = Path(path)
    _write_csv(path, TRACE_FIELDS, result.trace_rows())
    return path


def read_trace(path, round_index: int, attack_start_tick: int, threshold: float,
               tick_seconds: float) -> RoundResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != TRACE_FIELDS:
            raise ExportError(f"{path}: unexpected trace header {header}")
        rows = [tuple(float(v) for v in row) for row in reader]
    return RoundResult.from_trace(rows, round_index, attack_start_tick, threshold, tick_seconds)


def write_watermark(result: RoundResult, path, controller_period: int = 1) -> Path:
    """Audit dump of the watermark added to each command write."""
    path = Path(path)
    wm = result.watermark if result.watermark is not None else []
    _write_csv(path, WATERMARK_FIELDS, ((i * controller_period, float(v)) for i, v in enumerate(wm)))
    return path


def _echo(config: ScenarioConfig, threshold: float | None) -> str:
    cfg = copy.deepcopy(config)
    if threshold is not None:
        cfg.detector.threshold = float(threshold)
    return dump_scenario(cfg)


def export_results(report: MetricsReport | None, results, path, config: ScenarioConfig | None = None,
                   threshold: float | None = None, aborted=(), watermark: bool = False) -> Path:
    """Write one scenario's traces and config echo under ``path/<scenario>``.

    The summary row is written (or replaced) in ``path/summary.csv``.
    """
    root = Path(path)
    name = report.scenario if report is not None else (config.name if config is not None else "scenario")
    sub = root / name
    try:
        sub.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {sub}: {exc}") from exc
    for pattern in ("trace-*.csv", "watermark-*.csv"):
        for stale in sub.glob(pattern):
            stale.unlink()
    period = config.topology.controller_period if config is not None else 1
    for res in results:
        write_trace(res, sub / f"trace-{res.round_index:03d}.csv")
        if watermark:
            write_watermark(res, sub / f"watermark-{res.round_index:03d}.csv", period)
    _write_csv(sub / "aborted.csv", ABORTED_FIELDS, ((a.round_index, a.diagnostic) for a in aborted))
    if config is not None:
        (sub / "scenario.conf").write_text(_echo(config, threshold))
    summary = root / "summary.csv"
    rows = read_summary(summary) if summary.exists() else []
    rows = [r for r in rows if r.scenario != name]
    if report is not None:
        rows.append(report)
    write_summary(sorted(rows, key=lambda r: r.scenario), summary)
    return sub


def load_results(directory) -> tuple[ScenarioConfig, list[RoundResult]]:
    """Re-import a scenario directory written by :func:`export_results`."""
    directory = Path(directory)
    config = load_scenario(directory / "scenario.conf")
    results = []
    for p in sorted(directory.glob("trace-*.csv")):
        idx = int(_TRACE_RE.search(p.name).group(1))
        results.append(read_trace(p, idx, config.attack.attack_start_tick, config.detector.threshold,
                                  config.plant.tick_seconds))
    return config, results


def format_table(reports) -> str:
    def fmt(v):
        if isinstance(v, float):
            return "nan" if math.isnan(v) else f"{v:.4f}"
        return str(v)

    rows = [SUMMARY_FIELDS] + [tuple(fmt(v) for v in r.summary_row()) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(SUMMARY_FIELDS))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
