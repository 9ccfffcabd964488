"""Core data types passed between pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class VideoClip:
    """A frame sequence: float array [N, H, W, C] with values in [0, 1].

    The universal currency of the pipeline: the synthesizer emits clips,
    the curation stages cut them, the model samples them, and the benchmark
    consumes them.
    """

    frames: np.ndarray
    fps: int
    caption: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        f = np.asarray(self.frames)
        if f.ndim != 4:
            raise ShapeError(f"frames must be [N, H, W, C], got shape {f.shape}")
        if f.shape[0] < 2:
            raise ShapeError(f"a clip needs at least 2 frames, got {f.shape[0]}")
        if not np.issubdtype(f.dtype, np.floating):
            f = f.astype(np.float32) / (255.0 if f.dtype == np.uint8 else 1.0)
        if not np.isfinite(f).all():
            raise ShapeError("frames contain non-finite values")
        if f.min() < 0.0 or f.max() > 1.0:
            raise ShapeError(
                f"frame values must lie in [0, 1], got [{f.min():.4g}, {f.max():.4g}]"
            )
        if self.fps <= 0:
            raise ShapeError(f"fps must be positive, got {self.fps}")
        self.frames = np.ascontiguousarray(f, dtype=np.float32)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]

    def first_frame(self) -> np.ndarray:
        return self.frames[0]

    def last_frame(self) -> np.ndarray:
        return self.frames[-1]


@dataclass(frozen=True)
class TextEmbedding:
    """Frozen token embeddings for a prompt: [n_tokens, d_text].

    Produced by a seeded encoder, so the same source text and encoder
    config always yield identical tokens. Any learned processing happens
    downstream inside the denoiser.
    """

    tokens: np.ndarray
    source_text: str

    def __post_init__(self) -> None:
        t = np.asarray(self.tokens, dtype=np.float32)
        if t.ndim != 2:
            raise ShapeError(f"tokens must be [n_tokens, d_text], got shape {t.shape}")
        object.__setattr__(self, "tokens", t)

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]
