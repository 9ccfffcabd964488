"""Benchmark driver: evaluate a sample source against a test manifest.

A sample source produces the "generated" clip for each test record; the
model-backed source lives in the harness, while the sources here serve
self-evaluation (ground truth as generated) and pre-generated clip
directories. Frame-fidelity metrics are computed on unclamped generations
(clamped ones would make them vacuous); everything else uses the clamped
pass. Set-level distribution distance is computed per scale over pooled
frames, so it has no per-clip column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from ..data.clipio import read_clip
from ..data.curate import validate_manifest
from ..data.flow import make_flow_estimator
from ..errors import ConfigurationError, DataError
from ..types import VideoClip
from .embedders import RandomConvEmbedder, fit_probe_on_synthetic
from .metrics import (
    average_interpolator,
    dynamic_degree,
    flow_warp_interpolator,
    frame_fidelity,
    frechet_feature_distance,
    motion_smoothness,
    perceptual_distance,
    semantic_fidelity,
    temporal_flickering,
)
from .report import BenchReport, MetricResult, log10_variance

PER_CLIP_METRICS = (
    ("video_perceptual", "lower_better"),
    ("frame_psnr", "higher_better"),
    ("frame_ssim", "higher_better"),
    ("frame_perceptual", "lower_better"),
    ("semantic_similarity", "higher_better"),
    ("temporal_flickering", "higher_better"),
    ("motion_smoothness", "higher_better"),
    ("dynamic_degree", "higher_better"),
)

ALL_METRICS = ("video_frechet",) + tuple(n for n, _ in PER_CLIP_METRICS)


class SampleSource(Protocol):
    name: str

    def generate(self, record: dict, gt: VideoClip, clamp: bool) -> VideoClip: ...


class GroundTruthSource:
    """Self-evaluation: the ground-truth clip plays the generated role."""

    name = "ground-truth"

    def generate(self, record: dict, gt: VideoClip, clamp: bool) -> VideoClip:
        return gt


class ClipDirSource:
    """Pre-generated clips stored as <clip_id>.clip in one directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.name = f"clipdir:{self.root}"

    def generate(self, record: dict, gt: VideoClip, clamp: bool) -> VideoClip:
        path = self.root / f"{record['clip_id']}.clip"
        if not path.is_file():
            raise DataError(f"no generated clip for {record['clip_id']!r}")
        return read_clip(path)


@dataclass
class BenchConfig:
    scales: tuple[int, ...] = (5, 9, 17, 33, 65, 81)
    metrics: tuple[str, ...] = ALL_METRICS
    embedder_seed: int = 7
    embedder_kernels: int = 8
    embedder_scales: int = 3
    flow_estimator: str = "coarse2fine"
    flow_params: dict = field(default_factory=dict)
    smoothness_interpolator: str = "average"
    probe_seed: int = 11
    probe_train_videos: int = 400
    probe_train_frames: int = 17
    sample_steps: int = 25
    sample_eta: float = 1.0
    sample_seed: int = 0
    fps: int = 8

    def __post_init__(self) -> None:
        self.scales = tuple(sorted(int(s) for s in self.scales))
        self.metrics = tuple(self.metrics)
        unknown = set(self.metrics) - set(ALL_METRICS)
        if unknown:
            raise ConfigurationError(
                f"unknown metrics {sorted(unknown)}; choices {sorted(ALL_METRICS)}"
            )
        if self.smoothness_interpolator not in ("average", "flow_warp"):
            raise ConfigurationError(
                f"unknown interpolator {self.smoothness_interpolator!r}"
            )

    def to_dict(self) -> dict:
        return {
            "scales": list(self.scales),
            "metrics": list(self.metrics),
            "embedder_seed": self.embedder_seed,
            "embedder_kernels": self.embedder_kernels,
            "embedder_scales": self.embedder_scales,
            "flow_estimator": self.flow_estimator,
            "flow_params": self.flow_params,
            "smoothness_interpolator": self.smoothness_interpolator,
            "probe_seed": self.probe_seed,
            "probe_train_videos": self.probe_train_videos,
            "probe_train_frames": self.probe_train_frames,
            "sample_steps": self.sample_steps,
            "sample_eta": self.sample_eta,
            "sample_seed": self.sample_seed,
            "fps": self.fps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        for key in ("scales", "metrics"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def bench_run(
    source: SampleSource, testset_manifest: str | Path, config: BenchConfig
) -> BenchReport:
    records = validate_manifest(testset_manifest)
    base = Path(testset_manifest).parent
    by_scale: dict[int, list[dict]] = {}
    for r in records:
        by_scale.setdefault(r["scale_s"], []).append(r)
    missing = [s for s in config.scales if s not in by_scale]
    present = [s for s in config.scales if s in by_scale]
    if not present:
        raise DataError("testset covers none of the configured scales")

    embedder = RandomConvEmbedder(
        config.embedder_seed, config.embedder_kernels, config.embedder_scales
    )
    flow = make_flow_estimator(config.flow_estimator, **config.flow_params)
    if config.smoothness_interpolator == "flow_warp":
        interpolator = flow_warp_interpolator(flow)
    else:
        interpolator = average_interpolator
    probe = None
    if "semantic_similarity" in config.metrics:
        first_clip = read_clip(base / records[0]["path"])
        probe = fit_probe_on_synthetic(
            config.probe_seed,
            n_videos=config.probe_train_videos,
            height=first_clip.height,
            width=first_clip.width,
            channels=first_clip.channels,
            frames=config.probe_train_frames,
        )

    values: dict[str, dict[int, list[tuple[str, float]]]] = {
        name: {} for name, _ in PER_CLIP_METRICS if name in config.metrics
    }
    gen_frames_by_scale: dict[int, list[np.ndarray]] = {s: [] for s in present}
    gt_frames_by_scale: dict[int, list[np.ndarray]] = {s: [] for s in present}
    failures: list[dict] = []

    frame_metrics = {"frame_psnr", "frame_ssim", "frame_perceptual"}
    need_unclamped = bool(frame_metrics & set(config.metrics))
    need_clamped = bool(set(config.metrics) - frame_metrics)
    for s in present:
        for record in sorted(by_scale[s], key=lambda r: r["clip_id"]):
            gt = read_clip(base / record["path"])
            try:
                gen = source.generate(record, gt, clamp=True) if need_clamped else None
                gen_free = (
                    source.generate(record, gt, clamp=False)
                    if need_unclamped
                    else None
                )
            except Exception as e:  # noqa: BLE001 - failures annotate the report
                failures.append({"clip_id": record["clip_id"], "error": str(e)})
                continue
            cid = record["clip_id"]

            def put(name: str, value: float) -> None:
                if name in values:
                    values[name].setdefault(s, []).append((cid, float(value)))

            if "video_perceptual" in config.metrics:
                put("video_perceptual", perceptual_distance(gen, gt, embedder))
            if "video_frechet" in config.metrics:
                gen_frames_by_scale[s].append(gen.frames)
                gt_frames_by_scale[s].append(gt.frames)
            if any(
                m in config.metrics
                for m in ("frame_psnr", "frame_ssim", "frame_perceptual")
            ):
                ff = frame_fidelity(
                    gen_free, gt.first_frame(), gt.last_frame(), embedder
                )
                put("frame_psnr", ff["psnr_mean"])
                put("frame_ssim", ff["ssim_mean"])
                put("frame_perceptual", ff["perceptual_mean"])
            if "semantic_similarity" in config.metrics and probe is not None:
                put(
                    "semantic_similarity",
                    semantic_fidelity(gen, record["caption"], probe),
                )
            if "temporal_flickering" in config.metrics:
                put("temporal_flickering", temporal_flickering(gen))
            if "motion_smoothness" in config.metrics and gen.num_frames >= 3:
                put("motion_smoothness", motion_smoothness(gen, interpolator))
            if "dynamic_degree" in config.metrics:
                put("dynamic_degree", dynamic_degree(gen, flow))

    metrics: dict[str, dict] = {}
    directions = dict(PER_CLIP_METRICS)
    for name in config.metrics:
        if name == "video_frechet":
            continue
        per_scale: dict[str, float | None] = {}
        per_clip: dict[str, list] = {}
        pooled: list[float] = []
        for s in config.scales:
            pairs = values.get(name, {}).get(s)
            if pairs:
                result = MetricResult.from_values(
                    name, directions[name], [v for _, v in pairs]
                )
                per_scale[str(s)] = result.value
                per_clip[str(s)] = [[cid, v] for cid, v in pairs]
                pooled.extend(result.per_clip_values)
            else:
                per_scale[str(s)] = None
        entry = {
            "direction": directions[name],
            "per_scale": per_scale,
            "per_clip": per_clip,
            "all": (
                MetricResult.from_values(name, directions[name], pooled).value
                if pooled
                else None
            ),
        }
        scale_vals = [v for v in per_scale.values() if v is not None]
        entry["log10_var"] = (
            log10_variance(scale_vals) if len(scale_vals) >= 2 else None
        )
        metrics[name] = entry

    if "video_frechet" in config.metrics:
        per_scale = {}
        all_gen: list[np.ndarray] = []
        all_gt: list[np.ndarray] = []
        for s in config.scales:
            gens = gen_frames_by_scale.get(s, [])
            gts = gt_frames_by_scale.get(s, [])
            if gens and gts:
                g = np.concatenate(gens, axis=0)
                t = np.concatenate(gts, axis=0)
                per_scale[str(s)] = frechet_feature_distance(g, t, embedder)
                all_gen.append(g)
                all_gt.append(t)
            else:
                per_scale[str(s)] = None
        entry = {
            "direction": "lower_better",
            "per_scale": per_scale,
            "per_clip": {},
            "all": (
                frechet_feature_distance(
                    np.concatenate(all_gen, axis=0),
                    np.concatenate(all_gt, axis=0),
                    embedder,
                )
                if all_gen
                else None
            ),
        }
        scale_vals = [v for v in per_scale.values() if v is not None]
        entry["log10_var"] = (
            log10_variance(scale_vals) if len(scale_vals) >= 2 else None
        )
        metrics["video_frechet"] = entry

    return BenchReport(
        scales=list(config.scales),
        metrics=metrics,
        failures=failures,
        missing_scales=missing,
        meta={
            "source": source.name,
            "clips_evaluated": len(records) - len(failures),
            "clips_failed": len(failures),
            "bench_config": config.to_dict(),
            "variance_convention": (
                "population variance over per-scale mean values, log10"
            ),
        },
    )
