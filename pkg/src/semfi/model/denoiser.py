"""Tiny factorized space/time diffusion transformer.

Inputs arrive channel-assembled ([latent | guidance | mask]); tokens are 3D
patches with learned temporal and spatial position embeddings. Each block
runs spatial self-attention within a frame, temporal self-attention across
frames at fixed spatial location, cross-attention over text-plus-image
context tokens, and an MLP. Every attention projection and MLP matrix is a
RoutedLinear that accepts per-call low-rank adapter factors, which is how
the universal-plus-expert adaptation enters without mutating the module.
"""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..conditioning import GuidancePack, assemble_model_input
from ..errors import RangeError, ShapeError
from ..mol import Factors, MoLState
from ..rng import child_seed
from ..types import TextEmbedding
from .config import DenoiserConfig
from .patches import patchify, unpatchify

AdapterMap = dict[str, list[Factors]]


class RoutedLinear(nn.Linear):
    """Linear layer that can add unmerged low-rank deltas per call."""

    lora_name: str = ""

    def forward(  # type: ignore[override]
        self, x: torch.Tensor, factors: list[Factors] | None = None
    ) -> torch.Tensor:
        y = F.linear(x, self.weight, self.bias)
        if factors:
            for a, b, s in factors:
                y = y + s * F.linear(F.linear(x, a), b)
        return y


def _attend(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    scale = 1.0 / math.sqrt(q.shape[-1])
    attn = torch.softmax((q @ k.transpose(-2, -1)) * scale, dim=-1)
    return attn @ v


class SelfAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.qkv = RoutedLinear(dim, 3 * dim)
        self.proj = RoutedLinear(dim, dim)

    def forward(self, x: torch.Tensor, adapters: AdapterMap | None) -> torch.Tensor:
        b, l, d = x.shape
        qkv = self.qkv(x, _slot(adapters, self.qkv))
        q, k, v = qkv.reshape(b, l, 3, self.num_heads, d // self.num_heads).permute(
            2, 0, 3, 1, 4
        )
        out = _attend(q, k, v).transpose(1, 2).reshape(b, l, d)
        return self.proj(out, _slot(adapters, self.proj))


class CrossAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.q = RoutedLinear(dim, dim)
        self.kv = RoutedLinear(dim, 2 * dim)
        self.proj = RoutedLinear(dim, dim)

    def forward(
        self, x: torch.Tensor, ctx: torch.Tensor, adapters: AdapterMap | None
    ) -> torch.Tensor:
        b, l, d = x.shape
        m = ctx.shape[1]
        h = self.num_heads
        q = self.q(x, _slot(adapters, self.q)).reshape(b, l, h, d // h).transpose(1, 2)
        kv = self.kv(ctx, _slot(adapters, self.kv))
        k, v = kv.reshape(b, m, 2, h, d // h).permute(2, 0, 3, 1, 4)
        out = _attend(q, k, v).transpose(1, 2).reshape(b, l, d)
        return self.proj(out, _slot(adapters, self.proj))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = RoutedLinear(dim, hidden)
        self.fc2 = RoutedLinear(hidden, dim)

    def forward(self, x: torch.Tensor, adapters: AdapterMap | None) -> torch.Tensor:
        h = F.gelu(self.fc1(x, _slot(adapters, self.fc1)))
        return self.fc2(h, _slot(adapters, self.fc2))


def _slot(adapters: AdapterMap | None, layer: RoutedLinear):
    if adapters is None:
        return None
    return adapters.get(layer.lora_name)


class Block(nn.Module):
    """Pre-LN: spatial attn, temporal attn, cross attn, MLP (all residual)."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int):
        super().__init__()
        self.norm_space = nn.LayerNorm(dim)
        self.space_attn = SelfAttention(dim, num_heads)
        self.norm_time = nn.LayerNorm(dim)
        self.time_attn = SelfAttention(dim, num_heads)
        self.norm_cross = nn.LayerNorm(dim)
        self.cross_attn = CrossAttention(dim, num_heads)
        self.norm_mlp = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio * dim)

    def forward(
        self,
        x: torch.Tensor,
        ctx: torch.Tensor,
        nt: int,
        ns: int,
        adapters: AdapterMap | None,
    ) -> torch.Tensor:
        b, l, d = x.shape
        # Spatial: attend within each frame.
        h = self.norm_space(x).reshape(b * nt, ns, d)
        x = x + self.space_attn(h, adapters).reshape(b, l, d)
        # Temporal: attend across frames at a fixed spatial site.
        h = self.norm_time(x).reshape(b, nt, ns, d).transpose(1, 2)
        h = h.reshape(b * ns, nt, d)
        h = self.time_attn(h, adapters)
        x = x + h.reshape(b, ns, nt, d).transpose(1, 2).reshape(b, l, d)
        x = x + self.cross_attn(self.norm_cross(x), ctx, adapters)
        x = x + self.mlp(self.norm_mlp(x), adapters)
        return x


class Denoiser(nn.Module):
    """Predicts noise (or velocity) for an assembled conditional latent."""

    def __init__(self, cfg: DenoiserConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        pt, ph, pw = cfg.patch_size
        patch_vol = pt * ph * pw
        self.patch_embed = nn.Linear(patch_vol * cfg.in_channels, d)
        self.time_pos = nn.Parameter(torch.zeros(cfg.max_time_tokens, d))
        self.space_pos = nn.Parameter(torch.zeros(cfg.spatial_tokens, d))
        self.t_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        self.text_proj = nn.Linear(cfg.d_text, d)
        self.img_proj = nn.Linear(cfg.d_text, d)
        self.blocks = nn.ModuleList(
            Block(d, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.num_layers)
        )
        self.norm_out = nn.LayerNorm(d)
        self.out_proj = nn.Linear(d, patch_vol * cfg.latent_channels)
        self._name_routed_layers()
        self.reset_parameters(seed)

    def _name_routed_layers(self) -> None:
        for name, mod in self.named_modules():
            if isinstance(mod, RoutedLinear):
                mod.lora_name = name.replace(".", "/")

    def reset_parameters(self, seed: int) -> None:
        """Seed-addressed init: stable under module-order refactors."""
        for name, p in self.named_parameters():
            gen = torch.Generator().manual_seed(child_seed(seed, "param", name))
            with torch.no_grad():
                if name.endswith(".bias"):
                    p.zero_()
                elif "norm" in name and name.endswith(".weight"):
                    p.fill_(1.0)
                elif p.ndim == 1:
                    p.zero_()
                elif name == "out_proj.weight":
                    # near-zero output keeps early predictions small while
                    # leaving a gradient path open for adapter-only training
                    p.copy_(torch.randn(p.shape, generator=gen) * 0.002)
                else:
                    p.copy_(torch.randn(p.shape, generator=gen) * 0.02)

    def covered_layer_shapes(self) -> "OrderedDict[str, tuple[int, int]]":
        """Adapter targets: every attention and MLP matrix, in module order."""
        out: "OrderedDict[str, tuple[int, int]]" = OrderedDict()
        for _, mod in self.named_modules():
            if isinstance(mod, RoutedLinear):
                out[mod.lora_name] = (mod.out_features, mod.in_features)
        return out

    def _timestep_embedding(self, t: torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
        d = self.cfg.embed_dim
        half = d // 2
        freqs = torch.exp(
            -math.log(10000.0)
            * torch.arange(half, dtype=torch.float64, device=t.device)
            / max(half - 1, 1)
        )
        args = t.double()[:, None] * freqs[None, :]
        emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
        if emb.shape[1] < d:
            emb = F.pad(emb, (0, d - emb.shape[1]))
        return emb.to(dtype)

    def forward(
        self,
        assembled: torch.Tensor,
        timesteps: torch.Tensor,
        text_tokens: torch.Tensor,
        cond_embedding: torch.Tensor,
        adapters: AdapterMap | None = None,
    ) -> torch.Tensor:
        cfg = self.cfg
        if assembled.ndim != 5:
            raise ShapeError(
                f"expected assembled input [B,N,H,W,C], got {tuple(assembled.shape)}"
            )
        b, n, h, w, c = assembled.shape
        if c != cfg.in_channels:
            raise ShapeError(
                f"assembled input has {c} channels, model expects {cfg.in_channels}"
            )
        if (timesteps < 0).any() or (timesteps >= cfg.noise_steps).any():
            raise RangeError(
                f"timestep out of range [0, {cfg.noise_steps})"
            )
        pt = cfg.patch_size[0]
        nt = n // pt
        tokens = patchify(assembled, cfg)
        tokens = self.patch_embed(tokens)
        ns = cfg.spatial_tokens
        if tokens.shape[1] != nt * ns:
            raise ShapeError(
                f"model built for {ns} spatial tokens, input yields "
                f"{tokens.shape[1] // max(nt, 1)}"
            )
        if nt > cfg.max_time_tokens:
            raise ShapeError(
                f"{n} frames exceed configured max_frames {cfg.max_frames}"
            )
        pos = (
            self.time_pos[:nt, None, :] + self.space_pos[None, :, :]
        ).reshape(1, nt * ns, -1)
        t_emb = self.t_mlp(self._timestep_embedding(timesteps, tokens.dtype))
        x = tokens + pos.to(tokens.dtype) + t_emb[:, None, :]
        ctx = torch.cat(
            [self.text_proj(text_tokens), self.img_proj(cond_embedding)[:, None, :]],
            dim=1,
        )
        for block in self.blocks:
            x = block(x, ctx, nt, ns, adapters)
        x = self.out_proj(self.norm_out(x))
        latent_shape = (n, h, w, cfg.latent_channels)
        return unpatchify(x, cfg, latent_shape)


def forward_denoiser(
    model: Denoiser,
    noisy: np.ndarray | torch.Tensor,
    timestep: int,
    text: TextEmbedding,
    guidance: GuidancePack,
    mol: MoLState | None,
    target_N: int,
) -> np.ndarray | torch.Tensor:
    """Single-clip denoiser call: assembles conditioning and routes adapters.

    Exactly one expert contributes (routed from target_N) alongside the
    universal adapter whenever a MoL state with experts is given.
    """
    was_numpy = isinstance(noisy, np.ndarray)
    x = torch.as_tensor(np.asarray(noisy, dtype=np.float32)) if was_numpy else noisy
    if x.ndim != 4:
        raise ShapeError(f"expected noisy latent [N,H,W,C], got {tuple(x.shape)}")
    if target_N != x.shape[0]:
        raise ShapeError(
            f"target_N={target_N} but the latent has {x.shape[0]} frames"
        )
    if guidance.num_frames != x.shape[0]:
        raise ShapeError(
            f"guidance covers {guidance.num_frames} frames, latent has {x.shape[0]}"
        )
    dtype = next(model.parameters()).dtype
    assembled = assemble_model_input(x.to(dtype).unsqueeze(0), guidance)
    t = torch.tensor([timestep], dtype=torch.int64)
    text_tokens = torch.as_tensor(text.tokens, dtype=dtype).unsqueeze(0)
    cond = torch.as_tensor(guidance.cond_embedding, dtype=dtype).unsqueeze(0)
    adapters = mol.active_factors(target_N) if mol is not None else None
    with torch.no_grad():
        pred = model(assembled, t, text_tokens, cond, adapters).squeeze(0)
    return pred.numpy() if was_numpy else pred
