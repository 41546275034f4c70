"""Command-line entry point: ``scadasim run|matrix|calibrate|report|serve-plc``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ContractViolation, ScadaSimError, UndefinedMetricError
from .export import export_results, format_table, load_results, write_summary
from .metrics import detection_metrics
from .runner import resolve_threshold, run_scenario
from .scenario import ScenarioConfig, load_scenario, matrix_scenarios, set_option

log = logging.getLogger("scadasim")


def _config(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    for item in args.set or ():
        if "=" not in item:
            raise ContractViolation(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        set_option(cfg, key, value)
    if args.rounds is not None:
        cfg.rounds = args.rounds
    if args.seed is not None:
        cfg.root_seed = args.seed
    if getattr(args, "sample_flag", None):
        cfg.sample_flag = args.sample_flag
    cfg.attack.__post_init__()
    return cfg.validate()


def _run_one(cfg: ScenarioConfig, out: Path | None, watermark: bool = False):
    run = run_scenario(cfg, progress=lambda i: log.debug("%s round %d done", cfg.name, i))
    report = None
    try:
        report = detection_metrics(run.results, cfg.name, cfg.sample_flag, len(run.aborted))
    except UndefinedMetricError as exc:
        log.error("%s: %s", cfg.name, exc)
    if out is not None:
        export_results(report, run.results, out, cfg, run.threshold, run.aborted, watermark)
    return report, run


def cmd_run(args) -> int:
    report, run = _run_one(_config(args), args.out, args.dump_watermark)
    if report is not None:
        print(format_table([report]))
    return _status(len(run.aborted), args.allow_partial)


def cmd_matrix(args) -> int:
    base = _config(args)
    reports, aborted = [], 0
    for cfg in matrix_scenarios(base):
        log.info("running %s", cfg.name)
        report, run = _run_one(cfg, args.out, args.dump_watermark)
        aborted += len(run.aborted)
        if report is not None:
            reports.append(report)
    print(format_table(reports))
    return _status(aborted, args.allow_partial)


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    cfg.detector.threshold = 0.0
    print(repr(resolve_threshold(cfg)))
    return 0


def cmd_report(args) -> int:
    root = Path(args.out)
    dirs = sorted(p.parent for p in root.glob("*/scenario.conf"))
    if not dirs:
        print(f"no scenario directories under {root}", file=sys.stderr)
        return 1
    reports = []
    for d in dirs:
        cfg, results = load_results(d)
        flag = args.sample_flag or cfg.sample_flag
        reports.append(detection_metrics(results, d.name, flag))
    write_summary(reports, root / "summary.csv")
    print(format_table(reports))
    return 0


def cmd_serve_plc(args) -> int:
    from ..transport import ModbusTcpServer

    with ModbusTcpServer((args.host, args.port)) as server:
        print(f"serving Modbus-TCP on {server.server_address[0]}:{server.port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


def _status(aborted: int, allow_partial: bool) -> int:
    if aborted:
        log.error("%d round(s) aborted", aborted)
        return 0 if allow_partial else 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scadasim", description="SCADA watermark detection simulator")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_flags(sp, with_out=True):
        sp.add_argument("--scenario", type=Path, help="scenario file (key = value)")
        sp.add_argument("--rounds", type=int)
        sp.add_argument("--seed", type=lambda s: int(s, 0), help="root seed")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
        sp.add_argument("--sample-flag", choices=("exceedance", "alert"))
        if with_out:
            sp.add_argument("--out", type=Path, help="output directory for CSVs")
            sp.add_argument("--allow-partial", action="store_true", help="exit 0 even if rounds aborted")
            sp.add_argument("--dump-watermark", action="store_true", help="also write watermark-NNN.csv")

    scenario_flags(sub.add_parser("run", help="run one scenario"))
    scenario_flags(sub.add_parser("matrix", help="run the six attack/watermark combinations"))
    scenario_flags(sub.add_parser("calibrate", help="print the calibrated threshold"), with_out=False)
    rp = sub.add_parser("report", help="recompute metrics from exported traces")
    rp.add_argument("--out", type=Path, required=True)
    rp.add_argument("--sample-flag", choices=("exceedance", "alert"))
    sp = sub.add_parser("serve-plc", help="serve a register map over real Modbus-TCP")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=5020)
    return p


COMMANDS = {"run": cmd_run, "matrix": cmd_matrix, "calibrate": cmd_calibrate, "report": cmd_report,
            "serve-plc": cmd_serve_plc}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScadaSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
