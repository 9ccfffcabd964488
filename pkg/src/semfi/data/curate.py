"""Corpus curation: filtering, endpoint scoring, multi-scale cutting,
captioning, and manifest I/O.

Stages operate on manifest records (plain dicts) referencing clip files, so
each stage can be re-run independently and the outputs stay inspectable.
Manifests are JSON-lines sorted by id with canonical key order, which makes
a repeated run byte-identical.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..conditioning import area_downsample, cosine_similarity, to_grayscale
from ..errors import CaptionerError, ConfigurationError, DataError
from ..types import VideoClip
from .synth import caption_from_shapes


class PixelFeatureExtractor:
    """Stand-in for a pretrained image-feature tower.

    Grayscale, area-downsampled to a coarse grid, centered at the data-range
    midpoint (0.5) and flattened. Midpoint centering keeps opposite-extreme
    frames (all-black vs all-white) at cosine -1 instead of collapsing both
    to the zero vector.
    """

    def __init__(self, grid: int = 16):
        self.grid = grid

    def __call__(self, frame: np.ndarray) -> np.ndarray:
        gray = to_grayscale(np.asarray(frame, dtype=np.float32))
        small = area_downsample(gray, self.grid, self.grid)
        return (small - 0.5).reshape(-1)


def clip_score(
    I_f: np.ndarray, I_l: np.ndarray, feature_extractor: Callable
) -> float:
    """Cosine similarity of endpoint features; 1 means look-alike endpoints."""
    return cosine_similarity(feature_extractor(I_f), feature_extractor(I_l))


def flow_score(I_f: np.ndarray, I_l: np.ndarray, flow_estimator: Callable) -> float:
    """Mean per-pixel L2 norm of the estimated endpoint-to-endpoint flow."""
    flow = np.asarray(flow_estimator(I_f, I_l), dtype=np.float64)
    return float(np.mean(np.linalg.norm(flow, axis=-1)))


def filter_candidates(
    records: Sequence[dict], f_max: int = 81, max_fps: int = 30
) -> list[dict]:
    """Keep videos with fps <= max_fps and f_max <= frames <= 4*f_max."""
    if f_max < 2:
        raise ConfigurationError(f"f_max must be >= 2, got {f_max}")
    return [
        r
        for r in records
        if r["fps"] <= max_fps and f_max <= r["N"] <= 4 * f_max
    ]


@dataclass
class ScoreThresholds:
    clip_low: float
    clip_high: float
    flow_low: float
    flow_high: float
    derivation: str = "absolute"

    def __post_init__(self) -> None:
        if not (self.clip_low < self.clip_high):
            raise ConfigurationError(
                f"clip thresholds must satisfy low < high, got "
                f"[{self.clip_low}, {self.clip_high}]"
            )
        if not (self.flow_low < self.flow_high):
            raise ConfigurationError(
                f"flow thresholds must satisfy low < high, got "
                f"[{self.flow_low}, {self.flow_high}]"
            )

    @classmethod
    def from_percentiles(
        cls,
        clip_scores: Sequence[float],
        flow_scores: Sequence[float],
        low_pct: float = 5.0,
        high_pct: float = 95.0,
    ) -> "ScoreThresholds":
        return cls(
            clip_low=float(np.percentile(clip_scores, low_pct)),
            clip_high=float(np.percentile(clip_scores, high_pct)),
            flow_low=float(np.percentile(flow_scores, low_pct)),
            flow_high=float(np.percentile(flow_scores, high_pct)),
            derivation=f"percentile({low_pct},{high_pct})",
        )

    def to_dict(self) -> dict:
        return {
            "clip_low": self.clip_low,
            "clip_high": self.clip_high,
            "flow_low": self.flow_low,
            "flow_high": self.flow_high,
            "derivation": self.derivation,
        }


def threshold_filter(
    records: Sequence[dict], thresholds: ScoreThresholds
) -> list[dict]:
    """Retain records whose scores fall inside both threshold ranges."""
    out = []
    for r in records:
        if "S_c" not in r or "S_f" not in r:
            raise DataError(f"record {r.get('video_id', '?')} is not scored")
        if (
            thresholds.clip_low <= r["S_c"] <= thresholds.clip_high
            and thresholds.flow_low <= r["S_f"] <= thresholds.flow_high
        ):
            out.append(r)
    return out


def multi_scale_cut(video: VideoClip, scales: Sequence[int]) -> list[VideoClip]:
    """Center-cut one clip of exactly s frames for each s <= source length.

    The fractional midpoint convention is fixed to integers as
    start = floor(f/2) - floor(s/2), which guarantees s frames and a center
    offset of at most one frame.
    """
    f = video.num_frames
    if f < min(scales):
        warnings.warn(
            f"video of {f} frames is shorter than every scale in {sorted(scales)}"
        )
        return []
    out = []
    for s in sorted(scales):
        if s > f:
            continue
        start = f // 2 - s // 2
        cut = VideoClip(
            frames=video.frames[start : start + s].copy(),
            fps=video.fps,
            caption=video.caption,
            meta={**video.meta, "scale_s": int(s), "cut_start": int(start)},
        )
        out.append(cut)
    return out


class ProceduralCaptioner:
    """Reads the synthetic shape metadata carried in clip meta."""

    def __call__(self, clip: VideoClip) -> str:
        shapes = clip.meta.get("shapes")
        if not shapes:
            raise CaptionerError("clip has no shape metadata to caption from")
        return caption_from_shapes(shapes)


class ExternalCaptioner:
    """Hook for a VLM captioning service; fails until one is wired in."""

    def __init__(self, endpoint: str | None = None,
                 call: Callable[[VideoClip], str] | None = None):
        self.endpoint = endpoint
        self._call = call

    def __call__(self, clip: VideoClip) -> str:
        if self._call is not None:
            return self._call(clip)
        raise CaptionerError(
            f"external captioner endpoint unreachable: {self.endpoint!r}"
        )


def annotate(clip: VideoClip, captioner: Callable[[VideoClip], str]) -> str:
    caption = captioner(clip)
    if not caption:
        raise CaptionerError("captioner returned an empty caption")
    return caption


MANIFEST_FIELDS = (
    "clip_id",
    "path",
    "N",
    "H",
    "W",
    "fps",
    "caption",
    "S_c",
    "S_f",
    "source_video_id",
    "scale_s",
)


def write_manifest(path: str | Path, records: Sequence[dict],
                   id_field: str = "clip_id") -> None:
    """JSON-lines manifest sorted by id, canonical key order."""
    recs = sorted(records, key=lambda r: r[id_field])
    ids = [r[id_field] for r in recs]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate {id_field} values in manifest")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in recs:
            f.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    if not Path(path).is_file():
        raise DataError(f"manifest not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: bad manifest line: {e}") from e
    return records


def validate_manifest(path: str | Path) -> list[dict]:
    """Check field presence, id uniqueness, and that clip paths resolve."""
    base = Path(path).parent
    records = read_manifest(path)
    seen = set()
    for r in records:
        for fld in MANIFEST_FIELDS:
            if fld not in r:
                raise DataError(f"manifest record {r} missing field {fld!r}")
        if r["clip_id"] in seen:
            raise DataError(f"duplicate clip_id {r['clip_id']!r}")
        seen.add(r["clip_id"])
        if r["N"] != r["scale_s"]:
            raise DataError(
                f"clip {r['clip_id']!r}: N={r['N']} != scale_s={r['scale_s']}"
            )
        if not (base / r["path"]).is_file():
            raise DataError(f"clip path does not resolve: {r['path']!r}")
    return records
