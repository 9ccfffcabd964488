"""End-to-end data pipeline over an output directory.

Stage order: synth -> filter -> score (incl. threshold gating) -> cut ->
annotate. Every stage reads the previous stage's manifest and writes its
own, so stages can be re-run or inspected independently. All artifacts are
deterministic in (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigurationError, DataError
from .clipio import read_clip, write_clip
from .curate import (
    ExternalCaptioner,
    PixelFeatureExtractor,
    ProceduralCaptioner,
    ScoreThresholds,
    annotate,
    clip_score,
    filter_candidates,
    flow_score,
    multi_scale_cut,
    read_manifest,
    threshold_filter,
    write_manifest,
)
from ..errors import CaptionerError
from .flow import make_flow_estimator
from .synth import SynthConfig, synth_video

DEFAULT_SCALES = (5, 9, 17, 33, 65, 81)


@dataclass
class DataPipelineConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    f_max: int = 81
    max_fps: int = 30
    scales: tuple[int, ...] = DEFAULT_SCALES
    feature_grid: int = 16
    flow_estimator: str = "coarse2fine"
    flow_params: dict = field(default_factory=dict)
    threshold_mode: str = "percentile"
    low_pct: float = 5.0
    high_pct: float = 95.0
    absolute_thresholds: dict | None = None
    captioner: str = "procedural"
    out_dtype: str = "u1"

    def __post_init__(self) -> None:
        self.scales = tuple(sorted(int(s) for s in self.scales))
        if not self.scales:
            raise ConfigurationError("scales must be non-empty")
        if self.threshold_mode not in ("percentile", "absolute"):
            raise ConfigurationError(
                f"threshold_mode must be percentile or absolute, "
                f"got {self.threshold_mode!r}"
            )
        if self.threshold_mode == "absolute" and not self.absolute_thresholds:
            raise ConfigurationError(
                "absolute threshold_mode needs absolute_thresholds"
            )
        if self.captioner not in ("procedural", "external"):
            raise ConfigurationError(f"unknown captioner {self.captioner!r}")

    def to_dict(self) -> dict:
        return {
            "synth": self.synth.to_dict(),
            "f_max": self.f_max,
            "max_fps": self.max_fps,
            "scales": list(self.scales),
            "feature_grid": self.feature_grid,
            "flow_estimator": self.flow_estimator,
            "flow_params": self.flow_params,
            "threshold_mode": self.threshold_mode,
            "low_pct": self.low_pct,
            "high_pct": self.high_pct,
            "absolute_thresholds": self.absolute_thresholds,
            "captioner": self.captioner,
            "out_dtype": self.out_dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataPipelineConfig":
        d = dict(d)
        if "synth" in d:
            d["synth"] = SynthConfig.from_dict(d["synth"])
        if "scales" in d:
            d["scales"] = tuple(d["scales"])
        return cls(**d)


def stage_synth(out_dir: str | Path, cfg: DataPipelineConfig, seed: int) -> Path:
    out = Path(out_dir)
    raw = out / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(cfg.synth.num_videos):
        clip = synth_video(cfg.synth, seed, i)
        vid = clip.meta["video_id"]
        rel = f"raw/{vid}.clip"
        write_clip(out / rel, clip, dtype=cfg.out_dtype)
        records.append(
            {
                "video_id": vid,
                "path": rel,
                "N": clip.num_frames,
                "H": clip.height,
                "W": clip.width,
                "C": clip.channels,
                "fps": clip.fps,
                "caption": clip.caption,
            }
        )
    path = out / "raw_manifest.jsonl"
    write_manifest(path, records, id_field="video_id")
    return path


def stage_filter(out_dir: str | Path, cfg: DataPipelineConfig) -> Path:
    out = Path(out_dir)
    records = read_manifest(out / "raw_manifest.jsonl")
    kept = filter_candidates(records, f_max=cfg.f_max, max_fps=cfg.max_fps)
    path = out / "filtered_manifest.jsonl"
    write_manifest(path, kept, id_field="video_id")
    return path


def stage_score(out_dir: str | Path, cfg: DataPipelineConfig) -> Path:
    out = Path(out_dir)
    records = read_manifest(out / "filtered_manifest.jsonl")
    extractor = PixelFeatureExtractor(grid=cfg.feature_grid)
    estimator = make_flow_estimator(cfg.flow_estimator, **cfg.flow_params)
    scored = []
    for r in records:
        clip = read_clip(out / r["path"])
        s_c = clip_score(clip.first_frame(), clip.last_frame(), extractor)
        s_f = flow_score(clip.first_frame(), clip.last_frame(), estimator)
        scored.append({**r, "S_c": s_c, "S_f": s_f})
    write_manifest(out / "scored_manifest.jsonl", scored, id_field="video_id")
    if cfg.threshold_mode == "percentile":
        thresholds = ScoreThresholds.from_percentiles(
            [r["S_c"] for r in scored],
            [r["S_f"] for r in scored],
            cfg.low_pct,
            cfg.high_pct,
        )
    else:
        thresholds = ScoreThresholds(**cfg.absolute_thresholds)
    with open(out / "thresholds.json", "w", encoding="utf-8") as f:
        json.dump(thresholds.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")
    retained = threshold_filter(scored, thresholds)
    path = out / "retained_manifest.jsonl"
    write_manifest(path, retained, id_field="video_id")
    return path


def stage_cut(out_dir: str | Path, cfg: DataPipelineConfig) -> Path:
    out = Path(out_dir)
    records = read_manifest(out / "retained_manifest.jsonl")
    (out / "clips").mkdir(parents=True, exist_ok=True)
    cut_records = []
    for r in records:
        video = read_clip(out / r["path"])
        for cut in multi_scale_cut(video, cfg.scales):
            s = cut.meta["scale_s"]
            clip_id = f"{r['video_id']}_s{s:03d}"
            rel = f"clips/{clip_id}.clip"
            write_clip(out / rel, cut, dtype=cfg.out_dtype)
            cut_records.append(
                {
                    "clip_id": clip_id,
                    "path": rel,
                    "N": cut.num_frames,
                    "H": cut.height,
                    "W": cut.width,
                    "fps": cut.fps,
                    "caption": "",
                    "S_c": r["S_c"],
                    "S_f": r["S_f"],
                    "source_video_id": r["video_id"],
                    "scale_s": s,
                }
            )
    path = out / "cut_manifest.jsonl"
    write_manifest(path, cut_records)
    return path


def stage_annotate(out_dir: str | Path, cfg: DataPipelineConfig) -> Path:
    out = Path(out_dir)
    records = read_manifest(out / "cut_manifest.jsonl")
    captioner = (
        ProceduralCaptioner() if cfg.captioner == "procedural" else ExternalCaptioner()
    )
    final = []
    for r in records:
        clip = read_clip(out / r["path"])
        rec = dict(r)
        try:
            rec["caption"] = annotate(clip, captioner)
        except CaptionerError:
            rec["caption"] = ""
            rec["flags"] = sorted(set(rec.get("flags", [])) | {"caption_missing"})
        final.append(rec)
    path = out / "manifest.jsonl"
    write_manifest(path, final)
    return path


STAGES = ("synth", "filter", "score", "cut", "annotate")


def run_stage(
    stage: str, out_dir: str | Path, cfg: DataPipelineConfig, seed: int
) -> Path:
    if stage == "synth":
        return stage_synth(out_dir, cfg, seed)
    if stage == "filter":
        return stage_filter(out_dir, cfg)
    if stage == "score":
        return stage_score(out_dir, cfg)
    if stage == "cut":
        return stage_cut(out_dir, cfg)
    if stage == "annotate":
        return stage_annotate(out_dir, cfg)
    raise DataError(f"unknown pipeline stage {stage!r}")


def run_all(out_dir: str | Path, cfg: DataPipelineConfig, seed: int) -> Path:
    for stage in STAGES:
        path = run_stage(stage, out_dir, cfg, seed)
    return path
