"""Pixel-space latent codec.

There is no learned autoencoder at desk scale: the latent IS the pixel
tensor, optionally 2x average-pooled spatially. Decoding inverts the pool
with nearest-neighbor upsampling and clips back to [0, 1].
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class PixelCodec:
    def __init__(self, pool: int = 1):
        if pool not in (1, 2):
            raise ShapeError(f"pool factor must be 1 or 2, got {pool}")
        self.pool = pool

    def encode(self, frames: np.ndarray) -> np.ndarray:
        """[N,H,W,C] pixels in [0,1] -> latent [N,H/p,W/p,C]."""
        f = np.asarray(frames, dtype=np.float32)
        if f.ndim != 4:
            raise ShapeError(f"expected [N,H,W,C], got {f.shape}")
        if self.pool == 1:
            return f
        n, h, w, c = f.shape
        if h % 2 or w % 2:
            raise ShapeError(f"spatial dims ({h},{w}) not divisible by pool 2")
        return f.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def encode_frame(self, frame: np.ndarray) -> np.ndarray:
        """Single-frame view of encode, for guidance construction."""
        return self.encode(np.asarray(frame)[None])[0]

    def decode(self, latent: np.ndarray) -> np.ndarray:
        """Latent -> pixels in [0,1] (nearest upsample when pooled)."""
        z = np.asarray(latent, dtype=np.float32)
        if z.ndim != 4:
            raise ShapeError(f"expected [N,H',W',C], got {z.shape}")
        if self.pool == 2:
            z = z.repeat(2, axis=1).repeat(2, axis=2)
        return np.clip(z, 0.0, 1.0)
