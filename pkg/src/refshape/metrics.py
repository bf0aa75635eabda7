"""Tracking metrics for force step responses."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


def _pairs(F, r):
    F = np.asarray(F, dtype=float)
    r = np.asarray(r, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    if r.ndim == 1:
        r = r.reshape(-1, 1)
    if F.shape != r.shape:
        raise ValueError(f"signal shapes differ: {F.shape} vs {r.shape}")
    if len(F) == 0:
        raise ValueError("cannot compute metrics of an empty signal")
    return F, r


def rmse(F, r) -> float:
    """Root mean squared tracking error, sqrt(mean_k |F_k - r_k|^2)."""
    F, r = _pairs(F, r)
    return math.sqrt(float(np.sum((F - r) ** 2)) / len(F))


def final_step_index(r, atol: float = 0.0) -> int:
    """First index of the trailing run where ``r`` equals its last value."""
    r = np.asarray(r, dtype=float).reshape(len(r), -1)
    same = np.all(np.abs(r - r[-1]) <= atol, axis=1)
    k = len(r)
    while k > 0 and same[k - 1]:
        k -= 1
    return k


def settling_time(F, r, fraction: float = 0.05, step_index: int | None = None,
                  dt: float = 1.0, absolute_band: float | None = None) -> float | None:
    """Time after ``step_index`` at which F enters and stays in the band.

    The band is ``fraction * |r_final|`` around the final reference value,
    or ``absolute_band`` when given.  Returns ``None`` if the response is
    outside the band at the last sample.
    """
    F, r = _pairs(F, r)
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if step_index is None:
        step_index = final_step_index(r)
    if not 0 <= step_index < len(F):
        raise ValueError(f"step_index {step_index} outside signal of length {len(F)}")
    r_final = r[-1]
    if np.any(r[step_index:] != r_final):
        raise ValueError("reference is not constant after step_index; "
                         "settling time is defined for step responses")
    band = absolute_band if absolute_band is not None else fraction * np.abs(r_final)
    inside = np.all(np.abs(F - r_final) <= band, axis=1)
    k = len(F)
    while k > step_index and inside[k - 1]:
        k -= 1
    if k == len(F):
        return None
    return (k - step_index) * dt


@dataclass(frozen=True)
class MetricsReport:
    label: str
    rmse: float
    settling_time: float | None
    horizon: int
    dt: float
    rmse_after_step: float | None = None

    def __post_init__(self):
        if self.rmse < 0:
            raise ValueError("rmse must be nonnegative")
        if self.settling_time is not None and not 0 <= self.settling_time <= self.horizon * self.dt + 1e-12:
            raise ValueError("settling time outside the horizon")


def report(label: str, outputs, target, dt: float, fraction: float = 0.05) -> MetricsReport:
    """Metrics of an N+1 sample output trace against its tracking target.

    The RMSE runs over k = 1..N; F_0 is the initial condition.
    """
    F, r = _pairs(outputs, target)
    step = final_step_index(r)
    after = None
    if 1 <= step < len(F):
        after = rmse(F[step:], r[step:])
    return MetricsReport(
        label=label,
        rmse=rmse(F[1:], r[1:]),
        settling_time=settling_time(F, r, fraction, step_index=min(step, len(F) - 1), dt=dt),
        horizon=len(F) - 1,
        dt=dt,
        rmse_after_step=after,
    )


def _fmt(x, digits=4):
    return "n/a" if x is None else f"{x:.{digits}g}"


def format_table(reports: list[MetricsReport]) -> str:
    """Metrics (rows) against runs (columns), as plain aligned text."""
    header = ["Metric"] + [r.label for r in reports]
    rows = [
        ["RMSE (N)"] + [_fmt(r.rmse) for r in reports],
        ["RMSE after step (N)"] + [_fmt(r.rmse_after_step) for r in reports],
        ["t_5% (s)"] + [_fmt(r.settling_time) for r in reports],
    ]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = []
    for j, row in enumerate([header] + rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "rmse", "rmse_after_step", "settling_time", "horizon", "dt"])
    for r in reports:
        w.writerow([
            r.label,
            repr(r.rmse),
            "" if r.rmse_after_step is None else repr(r.rmse_after_step),
            "" if r.settling_time is None else repr(r.settling_time),
            r.horizon,
            repr(r.dt),
        ])
    return buf.getvalue()
