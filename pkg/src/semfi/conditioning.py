"""Dual-endpoint conditioning inputs for the denoiser.

The conditioning bundle has three parts: a guidance-frame tensor holding the
encoded first frame at position 0 and the encoded last frame at position
N-1 (zeros in between), a per-frame binary mask marking which positions are
preserved, and a single image-feature embedding formed by summing the two
endpoint embeddings. At assembly time the noisy latent, guidance frames,
and mask are concatenated along the channel axis; the mask is broadcast to
one channel here and nowhere else, so this module owns the layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateFeatureError, ShapeError
from .rng import np_rng

FrameEncoder = Callable[[np.ndarray], np.ndarray]
ImageEncoder = Callable[[np.ndarray], np.ndarray]


@dataclass
class GuidancePack:
    """Conditioning bundle: guidance frames [N,H,W,C'], mask [N], embedding [d]."""

    guidance_frames: np.ndarray
    mask: np.ndarray
    cond_embedding: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.guidance_frames, dtype=np.float32)
        m = np.asarray(self.mask, dtype=np.float32)
        if g.ndim != 4:
            raise ShapeError(f"guidance_frames must be [N,H,W,C'], got {g.shape}")
        if m.ndim != 1 or m.shape[0] != g.shape[0]:
            raise ShapeError(
                f"mask must be [N={g.shape[0]}], got shape {m.shape}"
            )
        if not np.isin(m, (0.0, 1.0)).all():
            raise ShapeError("mask must be binary")
        # Unconditioned positions must carry no payload.
        hidden = m == 0.0
        if hidden.any() and np.abs(g[hidden]).sum() != 0.0:
            raise ShapeError("guidance frames must be all-zero where mask is 0")
        self.guidance_frames = g
        self.mask = m
        self.cond_embedding = np.asarray(self.cond_embedding, dtype=np.float32)

    @property
    def num_frames(self) -> int:
        return self.guidance_frames.shape[0]


def build_guidance_frames(
    I_f: np.ndarray,
    I_l: np.ndarray,
    N: int,
    encoder: FrameEncoder | None = None,
) -> np.ndarray:
    """Place the encoded endpoints at positions 0 and N-1, zeros between.

    `encoder` maps one frame [H,W,C] to its latent [H',W',C']; identity in
    pixel mode.
    """
    if N < 2:
        raise ShapeError(f"guidance needs N >= 2, got N={N}")
    I_f = np.asarray(I_f, dtype=np.float32)
    I_l = np.asarray(I_l, dtype=np.float32)
    if I_f.shape != I_l.shape:
        raise ShapeError(
            f"endpoint frames must share dims, got {I_f.shape} vs {I_l.shape}"
        )
    first = I_f if encoder is None else np.asarray(encoder(I_f), dtype=np.float32)
    last = I_l if encoder is None else np.asarray(encoder(I_l), dtype=np.float32)
    out = np.zeros((N,) + first.shape, dtype=np.float32)
    out[0] = first
    out[N - 1] = last
    return out


def build_mask(N: int) -> np.ndarray:
    """Binary mask [N]: ones at 0 and N-1, zeros elsewhere ([1,1] for N=2)."""
    if N < 2:
        raise ShapeError(f"mask needs N >= 2, got N={N}")
    m = np.zeros(N, dtype=np.float32)
    m[0] = 1.0
    m[N - 1] = 1.0
    return m


def condition_embedding(
    I_f: np.ndarray, I_l: np.ndarray, image_encoder: ImageEncoder
) -> np.ndarray:
    """Sum of the two endpoint image embeddings (before any projection)."""
    e_f = np.asarray(image_encoder(np.asarray(I_f)), dtype=np.float32)
    e_l = np.asarray(image_encoder(np.asarray(I_l)), dtype=np.float32)
    if e_f.shape != e_l.shape:
        raise ShapeError(
            f"encoder returned mismatched embeddings: {e_f.shape} vs {e_l.shape}"
        )
    return e_f + e_l


def build_guidance_pack(
    I_f: np.ndarray,
    I_l: np.ndarray,
    N: int,
    image_encoder: ImageEncoder,
    frame_encoder: FrameEncoder | None = None,
) -> GuidancePack:
    """Full dual-endpoint conditioning bundle for an N-frame generation."""
    return GuidancePack(
        guidance_frames=build_guidance_frames(I_f, I_l, N, frame_encoder),
        mask=build_mask(N),
        cond_embedding=condition_embedding(I_f, I_l, image_encoder),
    )


def build_first_frame_pack(
    I_f: np.ndarray,
    N: int,
    image_encoder: ImageEncoder,
    frame_encoder: FrameEncoder | None = None,
) -> GuidancePack:
    """Single-endpoint variant used for I2V-style base pretraining.

    Only position 0 is preserved; the embedding degenerates to the first
    frame's alone (summed with itself would double it, so it is used once).
    """
    if N < 2:
        raise ShapeError(f"guidance needs N >= 2, got N={N}")
    I_f = np.asarray(I_f, dtype=np.float32)
    first = I_f if frame_encoder is None else np.asarray(frame_encoder(I_f), np.float32)
    frames = np.zeros((N,) + first.shape, dtype=np.float32)
    frames[0] = first
    mask = np.zeros(N, dtype=np.float32)
    mask[0] = 1.0
    emb = np.asarray(image_encoder(I_f), dtype=np.float32)
    return GuidancePack(guidance_frames=frames, mask=mask, cond_embedding=emb)


def assemble_model_input(noisy_latent, pack: GuidancePack):
    """Channel-concatenate [latent | guidance | mask-channel].

    Accepts numpy [N,H,W,C] or torch [..., N,H,W,C]; the mask is broadcast
    to a single trailing channel. Output channel count is C + C' + 1, and
    slicing the result recovers every component bit-exactly.
    """
    is_torch = hasattr(noisy_latent, "detach") and not isinstance(
        noisy_latent, np.ndarray
    )
    n, h, w = pack.guidance_frames.shape[:3]
    if noisy_latent.shape[-4] != n:
        raise ShapeError(
            f"latent has {noisy_latent.shape[-4]} frames but pack has {n}"
        )
    if tuple(noisy_latent.shape[-3:-1]) != (h, w):
        raise ShapeError(
            f"latent spatial dims {tuple(noisy_latent.shape[-3:-1])} != pack ({h}, {w})"
        )
    if is_torch:
        import torch

        g = torch.as_tensor(
            pack.guidance_frames, dtype=noisy_latent.dtype, device=noisy_latent.device
        )
        m = torch.as_tensor(
            pack.mask, dtype=noisy_latent.dtype, device=noisy_latent.device
        )
        m = m.view(n, 1, 1, 1).expand(n, h, w, 1)
        extra = noisy_latent.shape[:-4]
        if extra:
            g = g.expand(*extra, *g.shape)
            m = m.expand(*extra, *m.shape)
        return torch.cat([noisy_latent, g, m], dim=-1)
    m = np.broadcast_to(
        pack.mask.reshape(n, 1, 1, 1), (n, h, w, 1)
    ).astype(np.float32)
    return np.concatenate(
        [np.asarray(noisy_latent, dtype=np.float32), pack.guidance_frames, m], axis=-1
    )


def split_model_input(assembled, c_latent: int, c_guidance: int):
    """Inverse of assemble_model_input: (latent, guidance, mask_channel)."""
    total = assembled.shape[-1]
    if total != c_latent + c_guidance + 1:
        raise ShapeError(
            f"assembled input has {total} channels, expected "
            f"{c_latent}+{c_guidance}+1"
        )
    latent = assembled[..., :c_latent]
    guidance = assembled[..., c_latent : c_latent + c_guidance]
    mask = assembled[..., c_latent + c_guidance :]
    return latent, guidance, mask


class RandomProjectionImageEncoder:
    """Frozen stand-in for a pretrained image tower.

    Downsamples a frame to an 8x8 grayscale grid and applies a seeded random
    projection to d_out dimensions. Deterministic for a given seed; cheap
    enough to run inside the data pipeline.
    """

    def __init__(self, d_out: int, seed: int, grid: int = 8):
        self.d_out = d_out
        self.grid = grid
        rng = np_rng(seed, "image-encoder")
        self._proj = rng.standard_normal((d_out, grid * grid)).astype(
            np.float32
        ) / np.sqrt(grid * grid)

    def __call__(self, frame: np.ndarray) -> np.ndarray:
        gray = to_grayscale(np.asarray(frame, dtype=np.float32))
        small = area_downsample(gray, self.grid, self.grid)
        return self._proj @ small.reshape(-1)


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """[H,W,C] -> [H,W] by channel mean; passthrough for [H,W]."""
    if frame.ndim == 2:
        return frame
    if frame.ndim != 3:
        raise ShapeError(f"expected [H,W] or [H,W,C] frame, got {frame.shape}")
    return frame.mean(axis=-1)


def area_downsample(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Block-mean resize of a 2D image to (out_h, out_w).

    Rows/cols are split into contiguous near-equal bins and averaged; when
    the input is smaller than the target along an axis, nearest indexing is
    used instead.
    """
    h, w = img.shape

    def reduce_axis(a: np.ndarray, size: int, target: int, axis: int) -> np.ndarray:
        if size < target:
            idx = np.clip(
                np.round(np.linspace(0, size - 1, target)).astype(int), 0, size - 1
            )
            return np.take(a, idx, axis=axis)
        splits = np.array_split(np.arange(size), target)
        return np.stack(
            [np.take(a, s, axis=axis).mean(axis=axis) for s in splits], axis=axis
        )

    out = reduce_axis(img, h, out_h, 0)
    return reduce_axis(out, w, out_w, 1)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors; raises on an all-zero input."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateFeatureError("cosine similarity of a zero vector")
    return float(np.dot(a, b) / (na * nb))
