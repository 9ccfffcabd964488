"""Tokenize a video latent into non-overlapping 3D patches and back.

Token order is time-major, then rows, then columns, so position index
((it * nh) + ih) * nw + iw addresses token (it, ih, iw). Without a
projection the token dim is the raw patch volume, which makes the
round-trip exact; the denoiser supplies a learned projection on top.
"""

from __future__ import annotations

import torch

from ..errors import ConfigurationError
from .config import DenoiserConfig


def _grid(shape: tuple[int, ...], cfg: DenoiserConfig) -> tuple[int, int, int]:
    n, h, w = shape[-4], shape[-3], shape[-2]
    pt, ph, pw = cfg.patch_size
    for axis, size, p in (("frame", n, pt), ("height", h, ph), ("width", w, pw)):
        if size % p != 0:
            raise ConfigurationError(
                f"{axis} axis of size {size} not divisible by patch {p}"
            )
    return n // pt, h // ph, w // pw


def patchify(
    clip_latent: torch.Tensor,
    cfg: DenoiserConfig,
    proj: torch.Tensor | None = None,
) -> torch.Tensor:
    """[..., N,H,W,C] -> [..., L, D] with L = (N/pt)(H/ph)(W/pw).

    `proj` is an optional [D, pt*ph*pw*C] projection; omitted, tokens are
    the raw patch vectors.
    """
    x = clip_latent
    batched = x.ndim == 5
    if not batched:
        if x.ndim != 4:
            raise ConfigurationError(
                f"expected [N,H,W,C] or [B,N,H,W,C], got shape {tuple(x.shape)}"
            )
        x = x.unsqueeze(0)
    b, n, h, w, c = x.shape
    nt, nh, nw = _grid(x.shape, cfg)
    pt, ph, pw = cfg.patch_size
    x = x.reshape(b, nt, pt, nh, ph, nw, pw, c)
    x = x.permute(0, 1, 3, 5, 2, 4, 6, 7)
    tokens = x.reshape(b, nt * nh * nw, pt * ph * pw * c)
    if proj is not None:
        tokens = tokens @ proj.T
    return tokens if batched else tokens.squeeze(0)


def unpatchify(
    tokens: torch.Tensor,
    cfg: DenoiserConfig,
    latent_shape: tuple[int, int, int, int],
    proj: torch.Tensor | None = None,
) -> torch.Tensor:
    """Inverse of patchify back to [..., N,H,W,C] of `latent_shape`."""
    n, h, w, c = latent_shape
    nt, nh, nw = _grid((n, h, w, c), cfg)
    pt, ph, pw = cfg.patch_size
    x = tokens
    batched = x.ndim == 3
    if not batched:
        x = x.unsqueeze(0)
    if proj is not None:
        x = x @ proj
    if x.shape[-2] != nt * nh * nw or x.shape[-1] != pt * ph * pw * c:
        raise ConfigurationError(
            f"token grid {tuple(x.shape[-2:])} incompatible with latent "
            f"shape {latent_shape} under patch {cfg.patch_size}"
        )
    b = x.shape[0]
    x = x.reshape(b, nt, nh, nw, pt, ph, pw, c)
    x = x.permute(0, 1, 4, 2, 5, 3, 6, 7)
    x = x.reshape(b, n, h, w, c)
    return x if batched else x.squeeze(0)
