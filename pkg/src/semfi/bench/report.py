"""Benchmark report assembly and emission.

A report is a metric-by-frame-scale matrix plus a pooled "All" column and a
log10-variance column measuring how stable each metric is across scales
(population variance over the per-scale means; exact zero becomes the
"< -12" sentinel). Reports serialize to JSON for re-emission, and to CSV
and markdown with fixed number formatting so a seeded run is byte-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, InsufficientDataError

PROXY_BANNER = (
    "proxy-metric: perceptual, distribution, and semantic scores use frozen "
    "random-feature substitutes for pretrained towers; values are internally "
    "comparable but not comparable to scores computed with pretrained models."
)

VARIANCE_SENTINEL = "< -12"


@dataclass
class MetricResult:
    """One metric aggregated over clips: value is the mean of per-clip values."""

    name: str
    value: float
    direction: str
    per_clip_values: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.direction not in ("higher_better", "lower_better"):
            raise DataError(f"bad metric direction {self.direction!r}")
        if self.per_clip_values:
            mean = float(np.mean(self.per_clip_values))
            if not math.isclose(self.value, mean, rel_tol=1e-9, abs_tol=1e-12):
                raise DataError(
                    f"metric {self.name!r}: value {self.value} != mean of "
                    f"per-clip values {mean}"
                )
        if not math.isfinite(self.value):
            raise DataError(f"metric {self.name!r} value is not finite")

    @classmethod
    def from_values(
        cls, name: str, direction: str, values: list[float]
    ) -> "MetricResult":
        return cls(
            name=name,
            value=float(np.mean(values)),
            direction=direction,
            per_clip_values=[float(v) for v in values],
        )


def log10_variance(values) -> float | str:
    """log10 of the population variance.

    Variance below 1e-12 (a constant metric up to float rounding) collapses
    to the sentinel, matching what the sentinel literally states.
    """
    vals = [float(v) for v in values]
    if len(vals) < 2:
        raise InsufficientDataError(
            f"variance needs >= 2 values, got {len(vals)}"
        )
    var = float(np.var(vals))
    if var < 1e-12:
        return VARIANCE_SENTINEL
    return float(np.log10(var))


@dataclass
class BenchReport:
    """metric x frame-scale matrix with All and log10-variance columns."""

    scales: list[int]
    metrics: dict[str, dict]
    failures: list[dict] = field(default_factory=list)
    missing_scales: list[int] = field(default_factory=list)
    banner: str = PROXY_BANNER
    meta: dict = field(default_factory=dict)

    def metric_names(self) -> list[str]:
        return list(self.metrics)

    def per_scale(self, name: str) -> dict[int, float | None]:
        return {int(k): v for k, v in self.metrics[name]["per_scale"].items()}

    def all_value(self, name: str) -> float | None:
        return self.metrics[name].get("all")

    def to_json_dict(self) -> dict:
        return {
            "format": "semfi-bench-report",
            "version": 1,
            "banner": self.banner,
            "scales": self.scales,
            "metric_order": list(self.metrics),
            "metrics": self.metrics,
            "failures": self.failures,
            "missing_scales": self.missing_scales,
            "meta": self.meta,
        }

    def save_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, sort_keys=True, indent=2)
            f.write("\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "BenchReport":
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
        if d.get("format") != "semfi-bench-report":
            raise DataError(f"not a bench report: {path}")
        order = d.get("metric_order", list(d["metrics"]))
        metrics = {name: d["metrics"][name] for name in order}
        return cls(
            scales=d["scales"],
            metrics=metrics,
            failures=d.get("failures", []),
            missing_scales=d.get("missing_scales", []),
            banner=d.get("banner", PROXY_BANNER),
            meta=d.get("meta", {}),
        )


def cross_scale_variance(report: BenchReport) -> dict[str, float | str]:
    """Per-metric log10 population variance over the per-scale mean values."""
    out: dict[str, float | str] = {}
    for name in report.metric_names():
        vals = [v for v in report.per_scale(name).values() if v is not None]
        if len(vals) < 2:
            raise InsufficientDataError(
                f"metric {name!r} has {len(vals)} scale rows; variance "
                "needs at least 2"
            )
        out[name] = log10_variance(vals)
    return out


def _fmt(v: float | str | None) -> str:
    if v is None:
        return "absent"
    if isinstance(v, str):
        return v
    return f"{v:.6f}"


def write_csv(report: BenchReport, path: str | Path) -> None:
    lines = [f"# {report.banner}"]
    cols = ["metric", "direction"] + [f"s={s}" for s in report.scales]
    cols += ["All", "log10Var"]
    lines.append(",".join(cols))
    for name in report.metric_names():
        entry = report.metrics[name]
        row = [name, entry["direction"]]
        per_scale = report.per_scale(name)
        row += [_fmt(per_scale.get(s)) for s in report.scales]
        row.append(_fmt(entry.get("all")))
        row.append(_fmt(entry.get("log10_var")))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_markdown(report: BenchReport, path: str | Path) -> None:
    lines = ["# Benchmark report", "", f"> {report.banner}", ""]
    if report.meta:
        meta = json.dumps(report.meta, sort_keys=True)
        lines += [f"run meta: `{meta}`", ""]
    header = ["Metric", "Dir"] + [f"s={s}" for s in report.scales] + ["All"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    arrows = {"higher_better": "up", "lower_better": "down"}
    for name in report.metric_names():
        entry = report.metrics[name]
        per_scale = report.per_scale(name)
        row = [name, arrows[entry["direction"]]]
        row += [_fmt(per_scale.get(s)) for s in report.scales]
        row.append(_fmt(entry.get("all")))
        lines.append("| " + " | ".join(row) + " |")
    lines += ["", "## log10 variance across frame scales", ""]
    lines.append("| Metric | log10 variance |")
    lines.append("|---|---|")
    for name in report.metric_names():
        lines.append(f"| {name} | {_fmt(report.metrics[name].get('log10_var'))} |")
    if report.missing_scales:
        lines += ["", f"absent scales: {report.missing_scales}"]
    if report.failures:
        lines += ["", f"failed clips: {len(report.failures)}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_per_clip_csv(report: BenchReport, path: str | Path) -> None:
    """One row per clip, metric columns (set-level metrics have none)."""
    clip_rows: dict[str, dict[str, float]] = {}
    per_clip_metrics = [
        name
        for name in report.metric_names()
        if report.metrics[name].get("per_clip")
    ]
    for name in per_clip_metrics:
        for s, pairs in report.metrics[name]["per_clip"].items():
            for clip_id, value in pairs:
                clip_rows.setdefault(clip_id, {})[name] = value
    lines = [",".join(["clip_id"] + per_clip_metrics)]
    for clip_id in sorted(clip_rows):
        row = [clip_id] + [
            _fmt(clip_rows[clip_id].get(name)) for name in per_clip_metrics
        ]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_charts(report: BenchReport, out_dir: str | Path) -> list[Path]:
    """Static per-metric bar charts over scales (requires matplotlib)."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise DataError(
            "chart emission requires matplotlib (install extra 'charts')"
        ) from e
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in report.metric_names():
        per_scale = report.per_scale(name)
        xs = [s for s in report.scales if per_scale.get(s) is not None]
        ys = [per_scale[s] for s in xs]
        if not xs:
            continue
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.bar([str(s) for s in xs], ys, color="#4878a8")
        ax.set_title(name)
        ax.set_xlabel("frame scale")
        fig.tight_layout()
        p = out / f"{name}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        written.append(p)
    return written
