"""Detection metrics pooled over completed rounds.

Per-sample counts (``sample_flag`` picks exceedance ticks or alert ticks):

* ``SA``: samples at or after attack start; ``AD_post`` of them flagged.
* ``SN``: samples before attack start; ``AD_pre`` of them flagged.
* ``fn_ratio = (SA - AD_post) / SA`` and ``fp_ratio = AD_pre / SN``.

A round counts as detected when the alert counter increases at or after the
attack start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UndefinedMetricError


def sample_counts(results, sample_flag: str = "exceedance") -> dict:
    sa = ad_post = sn = ad_pre = 0
    for r in results:
        attacked = r.attacked
        flagged = r.flags(sample_flag)
        sa += int(attacked.sum())
        ad_post += int((attacked & flagged).sum())
        sn += int((~attacked).sum())
        ad_pre += int((~attacked & flagged).sum())
    return {"SA": sa, "AD_post": ad_post, "SN": sn, "AD_pre": ad_pre}


def fn_from_counts(sa: int, ad: int) -> float:
    if sa <= 0:
        raise UndefinedMetricError("no samples under attack")
    return (sa - ad) / sa


def fp_from_counts(sn: int, ad: int) -> float:
    if sn <= 0:
        raise UndefinedMetricError("no samples under normal operation")
    return ad / sn


def fn_ratio(results, sample_flag: str = "exceedance") -> float:
    c = sample_counts(results, sample_flag)
    return fn_from_counts(c["SA"], c["AD_post"])


def fp_ratio(results, sample_flag: str = "exceedance") -> float:
    c = sample_counts(results, sample_flag)
    return fp_from_counts(c["SN"], c["AD_pre"])


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    detection_ratio: float
    avg_detection_time_s: float
    fn_ratio: float
    fp_ratio: float
    rounds: int
    median_detection_time_s: float = math.nan
    aborted: int = 0

    def summary_row(self) -> tuple:
        return (self.scenario, self.detection_ratio, self.avg_detection_time_s, self.fn_ratio, self.fp_ratio,
                self.rounds)


def detection_times(results) -> np.ndarray:
    """Seconds from attack start to first alert, for detected rounds only."""
    return np.array([(r.first_alert_tick - r.attack_start_tick) * r.tick_seconds
                     for r in results if r.first_alert_tick is not None])


def detection_metrics(results, scenario: str = "", sample_flag: str = "exceedance",
                      aborted: int = 0) -> MetricsReport:
    results = list(results)
    if not results:
        raise UndefinedMetricError("no completed rounds")
    times = detection_times(results)
    c = sample_counts(results, sample_flag)
    fn = fn_from_counts(c["SA"], c["AD_post"]) if c["SA"] else math.nan
    fp = fp_from_counts(c["SN"], c["AD_pre"]) if c["SN"] else math.nan
    return MetricsReport(
        scenario=scenario,
        detection_ratio=len(times) / len(results),
        avg_detection_time_s=float(times.mean()) if times.size else math.nan,
        fn_ratio=fn,
        fp_ratio=fp,
        rounds=len(results),
        median_detection_time_s=float(np.median(times)) if times.size else math.nan,
        aborted=aborted,
    )
