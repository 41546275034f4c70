"""Build the fabric for one round, run it, and collect the detector trace."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from ..attacker.mitm import AttackConfig, AttackerNode, Strategy
from ..control import LqgDesign
from ..detector import DetectorConfig, calibrate_threshold
from ..watermark import calibrate_base_covariance
from ..errors import RoundAborted, ScadaSimError
from ..network import Clock, Fabric
from ..nodes import ControllerNode, PlcNode, RtuNode
from ..rng import split_seed
from .scenario import ScenarioConfig, dump_scenario

log = logging.getLogger(__name__)

TRACE_FIELDS = ("tick", "g_t", "risk", "alert", "y", "u", "residual", "fault")


@dataclass
class RoundResult:
    round_index: int
    seed: int
    attack_start_tick: int
    threshold: float
    tick_seconds: float
    ticks: np.ndarray
    g: np.ndarray
    risk: np.ndarray
    alert: np.ndarray
    y: np.ndarray
    u: np.ndarray
    residual: np.ndarray
    fault: np.ndarray
    first_alert_tick: int | None = None
    frames: int = 0
    watermark: np.ndarray = field(default=None, repr=False)

    @property
    def attacked(self) -> np.ndarray:
        return self.ticks >= self.attack_start_tick

    @property
    def exceedance(self) -> np.ndarray:
        return self.g >= self.threshold

    @property
    def alerted(self) -> np.ndarray:
        """Samples at which the alert counter increased."""
        prev = np.concatenate(([0], self.alert[:-1]))
        return self.alert > prev

    def flags(self, sample_flag: str = "exceedance") -> np.ndarray:
        return self.alerted if sample_flag == "alert" else self.exceedance

    def trace_rows(self):
        for i in range(len(self.ticks)):
            yield (int(self.ticks[i]), float(self.g[i]), int(self.risk[i]), int(self.alert[i]),
                   float(self.y[i]), float(self.u[i]), float(self.residual[i]), int(self.fault[i]))

    @classmethod
    def from_trace(cls, rows, round_index: int, attack_start_tick: int, threshold: float,
                   tick_seconds: float) -> "RoundResult":
        cols = list(zip(*rows)) if rows else [[] for _ in TRACE_FIELDS]
        arr = {name: np.asarray(col, dtype=float) for name, col in zip(TRACE_FIELDS, cols)}
        res = cls(round_index, 0, attack_start_tick, threshold, tick_seconds, arr["tick"].astype(int), arr["g_t"],
                  arr["risk"].astype(int), arr["alert"].astype(int), arr["y"], arr["u"], arr["residual"],
                  arr["fault"].astype(bool))
        res.first_alert_tick = first_alert_after(res.ticks, res.alert, attack_start_tick)
        return res


def first_alert_after(ticks: np.ndarray, alert: np.ndarray, start: int) -> int | None:
    """First tick at or after ``start`` where the alert counter increases."""
    if len(ticks) == 0:
        return None
    prev = np.concatenate(([0], alert[:-1]))
    hits = np.nonzero((alert > prev) & (ticks >= start))[0]
    return int(ticks[hits[0]]) if hits.size else None


@dataclass
class Round:
    """A fully wired fabric for one round (kept so tests can poke at nodes)."""

    fabric: Fabric
    controller: ControllerNode
    rtu: RtuNode
    plc: PlcNode
    attacker: AttackerNode | None


_DESIGNS: dict = {}


def lqg_design(config: ScenarioConfig) -> LqgDesign:
    key = repr((config.plant.A, config.plant.B, config.plant.C, config.plant.Q, config.plant.R,
                config.plant.W, config.plant.U, config.plant.tick_seconds))
    if key not in _DESIGNS:
        _DESIGNS[key] = LqgDesign(config.plant.model())
    return _DESIGNS[key]


def build_round(config: ScenarioConfig, seed: int, threshold: float, ticks_override: int | None = None,
                attack: AttackConfig | None = None, log_events: bool = False, base_covariance=None) -> Round:
    design = lqg_design(config)
    model = design.model
    topo = config.topology
    codecs = topo.codecs()
    fabric = Fabric(Clock(0, topo.controller_period, topo.sensor_period), log_events=log_events)
    plc = PlcNode("plc-0", model, config.plant.x0, split_seed(seed, "plc-0/process"),
                  split_seed(seed, "plc-0/sensor"), codecs, topo.registers)
    rtu = RtuNode("rtu-0", plc.node_id, register_count=topo.registers)
    wm = config.watermark.build(split_seed(seed, "controller/watermark"), model.m, base_covariance)
    det = DetectorConfig(threshold, config.detector.window, config.detector.gwindow)
    ctl = ControllerNode("controller", rtu.node_id, design, config.plant.x0, config.plant.reference, wm, det,
                         topo.controller_period, topo.sensor_period, topo.timeout_ticks, codecs)
    for node in (plc, rtu, ctl):
        fabric.add_node(node)
    fabric.connect(ctl.node_id, rtu.node_id, topo.latency_ticks)
    fabric.connect(rtu.node_id, plc.node_id, topo.latency_ticks)
    attack = attack if attack is not None else config.attack
    attacker = None
    if attack.strategy is not Strategy.NONE:
        attacker = AttackerNode("attacker", attack, plc.node_id, rtu.node_id, codecs.distance(), codecs.command())
        fabric.add_node(attacker)
    return Round(fabric, ctl, rtu, plc, attacker)


def _result(rnd: Round, round_index: int, seed: int, attack_start: int, threshold: float,
            tick_seconds: float) -> RoundResult:
    tr = rnd.controller.trace
    res = RoundResult(
        round_index, seed, attack_start, threshold, tick_seconds,
        ticks=np.array([r.tick for r in tr], dtype=int),
        g=np.array([r.g_t for r in tr]),
        risk=np.array([r.risk for r in tr], dtype=int),
        alert=np.array([r.alert for r in tr], dtype=int),
        y=np.array([r.y for r in tr]),
        u=np.array([r.u for r in tr]),
        residual=np.array([r.residual for r in tr]),
        fault=np.array([r.fault for r in tr], dtype=bool),
        frames=sum(ch.frames_sent for ch in rnd.fabric.channels.values()),
        watermark=np.array(rnd.controller.watermarks),
    )
    res.first_alert_tick = first_alert_after(res.ticks, res.alert, attack_start)
    return res


def round_seed(config: ScenarioConfig, round_index: int) -> int:
    return split_seed(config.root_seed, f"round-{round_index}")


def run_round(config: ScenarioConfig, round_index: int, threshold: float | None = None,
              keep: list | None = None) -> RoundResult:
    """Run one seeded round; module errors become :class:`RoundAborted`."""
    if threshold is None:
        threshold = resolve_threshold(config)
    seed = round_seed(config, round_index)
    try:
        rnd = build_round(config, seed, threshold, base_covariance=watermark_covariance(config))
        rnd.fabric.run_until(config.round_ticks - 1)
    except ScadaSimError as exc:
        raise RoundAborted(round_index, str(exc)) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise RoundAborted(round_index, repr(exc)) from exc
    if keep is not None:
        keep.append(rnd)
    return _result(rnd, round_index, seed, config.attack.attack_start_tick, threshold, config.plant.tick_seconds)


def calibration_trace(config: ScenarioConfig, ticks: int) -> np.ndarray:
    """g_t over a seeded attack-free run with the scenario's watermark."""
    seed = split_seed(config.root_seed, "calibration")
    # any positive placeholder: alerts are irrelevant here
    rnd = build_round(config, seed, 1.0, attack=AttackConfig(Strategy.NONE),
                      base_covariance=watermark_covariance(config))
    rnd.fabric.run_until(ticks - 1)
    return np.array([r.g_t for r in rnd.controller.trace])


POWER_CALIBRATION_TICKS = 2000
_WM_COVARIANCES: dict = {}


def watermark_covariance(config: ScenarioConfig):
    """Base covariance from ``watermark.power_fraction``, or None to use sigma.

    When the fraction is positive the covariance is that fraction of the
    command variance seen over an attack-free, watermark-free run (cached).
    """
    frac = config.watermark.power_fraction
    if frac <= 0:
        return None
    key = (_calibration_key(config), POWER_CALIBRATION_TICKS)
    if key not in _WM_COVARIANCES:
        quiet = copy.deepcopy(config)
        quiet.watermark.mode = "disabled"
        quiet.watermark.power_fraction = 0.0
        rnd = build_round(quiet, split_seed(config.root_seed, "watermark-power"), 1.0,
                          attack=AttackConfig(Strategy.NONE))
        rnd.fabric.run_until(POWER_CALIBRATION_TICKS - 1)
        _WM_COVARIANCES[key] = calibrate_base_covariance(rnd.controller.commands, frac)
        log.info("watermark covariance %s from power fraction %g", _WM_COVARIANCES[key].tolist(), frac)
    return _WM_COVARIANCES[key]


_THRESHOLDS: dict = {}


def _calibration_key(config: ScenarioConfig) -> str:
    text = dump_scenario(config)
    drop = ("name =", "attack.", "rounds =", "round_ticks =", "sample_flag =")
    return "\n".join(line for line in text.splitlines() if not line.startswith(drop))


def resolve_threshold(config: ScenarioConfig) -> float:
    """Configured threshold, or one calibrated on an attack-free run (cached)."""
    if config.detector.threshold > 0:
        return config.detector.threshold
    key = _calibration_key(config)
    if key not in _THRESHOLDS:
        d = config.detector
        _THRESHOLDS[key] = calibrate_threshold(lambda n: calibration_trace(config, n), d.target_fp,
                                               d.calibration_ticks)
        log.info("calibrated threshold %.6g for %s", _THRESHOLDS[key], config.name)
    return _THRESHOLDS[key]


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    threshold: float
    results: list
    aborted: list


def run_scenario(config: ScenarioConfig, rounds: int | None = None, progress=None) -> ScenarioRun:
    threshold = resolve_threshold(config)
    results, aborted = [], []
    for i in range(rounds if rounds is not None else config.rounds):
        try:
            results.append(run_round(config, i, threshold))
        except RoundAborted as exc:
            log.error("%s", exc)
            aborted.append(exc)
        if progress:
            progress(i)
    return ScenarioRun(config, threshold, results, aborted)
