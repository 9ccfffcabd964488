"""Pluggable feature embedders for the proxy metrics.

RandomConvEmbedder replaces pretrained perceptual towers with a frozen,
seeded bank of random convolutions pooled over several scales. The joint
video/text space for semantic scoring is a linear probe: video descriptors
(color histograms, occupancy grid, motion energy) regressed onto hashed
bag-of-words text vectors over a synthetic training set.
"""

from __future__ import annotations

import re

import numpy as np
from scipy import ndimage

from ..conditioning import area_downsample, cosine_similarity, to_grayscale
from ..errors import StatisticsError
from ..rng import child_seed, np_rng
from ..types import VideoClip


class RandomConvEmbedder:
    """Frozen multi-scale random conv features of a single frame.

    Per scale: convolve each of `n_kernels` seeded 3x3 kernels over the
    (grayscale) image, rectify, and pool mean and std spatially. Scales
    halve the image by block means. Deterministic per seed.
    """

    def __init__(self, seed: int, n_kernels: int = 8, n_scales: int = 3):
        self.n_kernels = n_kernels
        self.n_scales = n_scales
        rng = np_rng(seed, "conv-embedder")
        self.kernels = rng.standard_normal((n_kernels, 3, 3)).astype(np.float64)
        self.kernels -= self.kernels.mean(axis=(1, 2), keepdims=True)

    @property
    def dim(self) -> int:
        return 2 * self.n_kernels * self.n_scales

    def __call__(self, frame: np.ndarray) -> np.ndarray:
        img = to_grayscale(np.asarray(frame, dtype=np.float64))
        feats = []
        for _ in range(self.n_scales):
            for k in self.kernels:
                resp = np.abs(ndimage.correlate(img, k, mode="reflect"))
                feats.append(resp.mean())
                feats.append(resp.std())
            if min(img.shape) >= 8:
                h, w = img.shape[0] // 2, img.shape[1] // 2
                img = img[: 2 * h, : 2 * w].reshape(h, 2, w, 2).mean(axis=(1, 3))
        out = np.asarray(feats, dtype=np.float64)
        if out.size < self.dim:
            out = np.pad(out, (0, self.dim - out.size))
        return out


def video_descriptor(clip, bins: int = 8, grid: int = 4) -> np.ndarray:
    """Hand-rolled clip features aligned with what captions describe.

    Foreground-weighted color histograms carry the color words, the
    foreground-centroid trajectory carries motion direction, and an
    edge-orientation histogram separates shape kinds (squares peak at
    axis-aligned orientations, triangles at their edge angles).
    """
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    frames = frames.astype(np.float64)
    n, h, w, c = frames.shape
    feats = []
    background = np.median(frames, axis=0)
    fg = np.abs(frames - background).mean(axis=-1)
    fg_mass = fg.sum(axis=(1, 2)) + 1e-9
    fg_norm = fg / fg_mass[:, None, None]
    for ch in range(c):
        hist = np.zeros(bins)
        idx = np.minimum((frames[..., ch] * bins).astype(int), bins - 1)
        np.add.at(hist, idx.reshape(-1), fg_norm.reshape(-1))
        feats.append(hist / n)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cx = (fg * xx).sum(axis=(1, 2)) / fg_mass / w
    cy = (fg * yy).sum(axis=(1, 2)) / fg_mass / h
    feats.append(
        np.asarray(
            [
                cx[-1] - cx[0],
                cy[-1] - cy[0],
                np.abs(np.diff(cx)).sum() if n > 1 else 0.0,
                np.abs(np.diff(cy)).sum() if n > 1 else 0.0,
                cx.mean(),
                cy.mean(),
            ]
        )
    )
    mean_gray = to_grayscale(frames.mean(axis=0))
    gy, gx = np.gradient(mean_gray)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    ohist = np.zeros(6)
    obins = np.minimum((ang / np.pi * 6).astype(int), 5)
    np.add.at(ohist, obins.reshape(-1), mag.reshape(-1))
    feats.append(ohist / (ohist.sum() + 1e-9))
    feats.append(area_downsample(mean_gray, grid, grid).reshape(-1))
    motion = np.mean(np.abs(np.diff(frames, axis=0))) if n > 1 else 0.0
    endpoint_gap = np.mean(np.abs(frames[-1] - frames[0]))
    feats.append(
        np.asarray([motion * 10.0, endpoint_gap * 5.0, frames.mean(), frames.std()])
    )
    return np.concatenate(feats)


_WORD_RE = re.compile(r"[a-z0-9]+")


class JointProbeEmbedder:
    """Linear probe aligning video descriptors with hashed text vectors.

    Text side: each word hashes into a frozen seeded table and is weighted
    by inverse document frequency over the training captions, then the
    vectors are centered, so template filler words every caption shares
    cancel and cosine contrasts on the content words. Video side:
    standardized descriptors regressed onto the centered text vectors by
    closed-form ridge. similarity() is the cosine in the shared space.
    """

    def __init__(self, seed: int, d_sem: int = 64, vocab_buckets: int = 4096,
                 ridge: float = 3e-3):
        self.seed = seed
        self.ridge = ridge
        self.vocab_buckets = vocab_buckets
        rng = np_rng(seed, "probe-text-table")
        self._table = rng.standard_normal((vocab_buckets, d_sem)) / np.sqrt(d_sem)
        self._idf: dict[str, float] = {}
        self.weights: np.ndarray | None = None
        self._mean: np.ndarray | None = None
        self._std: np.ndarray | None = None
        self._text_mean: np.ndarray | None = None

    def _bucket(self, word: str) -> int:
        return child_seed(self.seed, "word", word) % self.vocab_buckets

    def _raw_text(self, text: str) -> np.ndarray:
        words = _WORD_RE.findall(text.lower())
        v = np.zeros(self._table.shape[1], dtype=np.float64)
        for w in words:
            v += self._idf.get(w, 2.0) * self._table[self._bucket(w)]
        return v / max(len(words), 1)

    def encode_text(self, text: str) -> np.ndarray:
        if self._text_mean is None:
            raise StatisticsError("probe is not fitted")
        return self._raw_text(text) - self._text_mean

    def fit(self, clips_and_captions: list[tuple[VideoClip, str]]) -> None:
        if len(clips_and_captions) < 2:
            raise StatisticsError(
                f"probe needs >= 2 training pairs, got {len(clips_and_captions)}"
            )
        df: dict[str, int] = {}
        for _, cap in clips_and_captions:
            for w in set(_WORD_RE.findall(cap.lower())):
                df[w] = df.get(w, 0) + 1
        n = len(clips_and_captions)
        self._idf = {w: float(np.log((1 + n) / (1 + k)) + 1.0) for w, k in df.items()}
        v = np.stack([video_descriptor(c) for c, _ in clips_and_captions])
        t = np.stack([self._raw_text(cap) for _, cap in clips_and_captions])
        self._text_mean = t.mean(axis=0)
        self._mean = v.mean(axis=0)
        self._std = np.where(v.std(axis=0) > 1e-9, v.std(axis=0), 1.0)
        vn = (v - self._mean) / self._std
        gram = vn.T @ vn + self.ridge * n * np.eye(vn.shape[1])
        self.weights = np.linalg.solve(gram, vn.T @ (t - self._text_mean))

    def encode_video(self, clip) -> np.ndarray:
        if self.weights is None:
            raise StatisticsError("probe is not fitted")
        v = (video_descriptor(clip) - self._mean) / self._std
        return v @ self.weights

    def similarity(self, clip, text: str) -> float:
        return cosine_similarity(self.encode_video(clip), self.encode_text(text))


def fit_probe_on_synthetic(
    seed: int,
    n_videos: int = 400,
    height: int = 32,
    width: int = 32,
    channels: int = 3,
    frames: int = 17,
) -> JointProbeEmbedder:
    """Train the semantic probe on freshly synthesized captioned clips."""
    from ..data.synth import SynthConfig, synth_video
    from ..rng import child_seed

    cfg = SynthConfig(
        num_videos=n_videos,
        height=height,
        width=width,
        channels=channels,
        frames_min=frames,
        frames_max=frames,
    )
    pairs = []
    for i in range(n_videos):
        clip = synth_video(cfg, child_seed(seed, "probe-train"), i)
        pairs.append((clip, clip.caption))
    probe = JointProbeEmbedder(seed=seed)
    probe.fit(pairs)
    return probe
