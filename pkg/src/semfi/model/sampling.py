"""Ancestral sampling conditioned on two endpoint frames and a prompt.

The sampler walks a descending timestep subset with the usual
predict-x0-then-step update (eta=1 gives ancestral sampling, eta=0 the
deterministic variant). With clamp_endpoints on, the endpoint positions of
the state are overwritten with forward-noised ground truth at every step,
and the final frames 0 and N-1 are the conditioning images exactly.
"""

from __future__ import annotations

import numpy as np
import torch

from ..conditioning import assemble_model_input, build_guidance_pack
from ..errors import RangeError, ShapeError
from ..mol import MoLState, route
from ..rng import child_seed
from ..types import TextEmbedding, VideoClip
from .codec import PixelCodec
from .denoiser import Denoiser
from .schedule import NoiseSchedule
from .text import TextEncoder


def sample(
    model: Denoiser,
    schedule: NoiseSchedule,
    codec: PixelCodec,
    text_encoder: TextEncoder,
    image_encoder,
    I_f: np.ndarray,
    I_l: np.ndarray,
    text: str | TextEmbedding,
    N: int,
    steps: int,
    rng_seed: int,
    mol: MoLState | None = None,
    clamp_endpoints: bool = True,
    eta: float = 1.0,
    cfg_scale: float = 0.0,
    fps: int = 8,
) -> VideoClip:
    if N < 2:
        raise RangeError(f"need at least 2 frames, got N={N}")
    I_f = np.asarray(I_f, dtype=np.float32)
    I_l = np.asarray(I_l, dtype=np.float32)
    if I_f.shape != I_l.shape:
        raise ShapeError(
            f"endpoint frames must share dims, got {I_f.shape} vs {I_l.shape}"
        )
    if isinstance(text, TextEmbedding):
        emb = text
    else:
        emb = text_encoder.encode(text)
    pack = build_guidance_pack(
        I_f, I_l, N, image_encoder, frame_encoder=codec.encode_frame
    )
    adapters = mol.active_factors(N) if mol is not None else None
    expert_s = (
        route(N, mol.frame_counts) if mol is not None and mol.has_experts else None
    )

    z_f = torch.from_numpy(codec.encode_frame(I_f))
    z_l = torch.from_numpy(codec.encode_frame(I_l))
    gen = torch.Generator().manual_seed(child_seed(rng_seed, "sample"))
    x = torch.randn((1, N) + tuple(z_f.shape), generator=gen)
    text_tokens = torch.from_numpy(emb.tokens).unsqueeze(0)
    cond = torch.from_numpy(pack.cond_embedding).unsqueeze(0)

    times = schedule.sampling_times(steps)
    model.eval()
    with torch.no_grad():
        for i, t in enumerate(times):
            ab_t = float(schedule.alpha_bar[t])
            sig_t = ab_t**0.5
            noi_t = (1.0 - ab_t) ** 0.5
            if clamp_endpoints:
                e2 = torch.randn((2,) + tuple(z_f.shape), generator=gen)
                x[0, 0] = sig_t * z_f + noi_t * e2[0]
                x[0, N - 1] = sig_t * z_l + noi_t * e2[1]
            assembled = assemble_model_input(x, pack)
            t_tensor = torch.tensor([int(t)], dtype=torch.int64)
            out = model(assembled, t_tensor, text_tokens, cond, adapters)
            if cfg_scale > 0.0:
                zero_text = torch.zeros_like(text_tokens)
                out_uncond = model(assembled, t_tensor, zero_text, cond, adapters)
                out = out_uncond + (1.0 + cfg_scale) * (out - out_uncond)
            if model.cfg.prediction_target == "velocity":
                # direct x0 form avoids dividing by the tiny signal coeff
                x0_hat = torch.clamp(sig_t * x - noi_t * out, 0.0, 1.0)
                eps_hat = sig_t * out + noi_t * x
            else:
                eps_hat = out
                x0_hat = torch.clamp((x - noi_t * eps_hat) / sig_t, 0.0, 1.0)
            if i + 1 == len(times):
                x = x0_hat
                break
            ab_n = float(schedule.alpha_bar[times[i + 1]])
            sigma = (
                eta
                * ((1.0 - ab_n) / (1.0 - ab_t)) ** 0.5
                * (1.0 - ab_t / ab_n) ** 0.5
            )
            dir_coeff = max(1.0 - ab_n - sigma**2, 0.0) ** 0.5
            noise = torch.randn(x.shape, generator=gen)
            x = ab_n**0.5 * x0_hat + dir_coeff * eps_hat + sigma * noise

    frames = codec.decode(x.squeeze(0).numpy())
    if clamp_endpoints:
        frames = frames.copy()
        frames[0] = np.clip(I_f, 0.0, 1.0)
        frames[-1] = np.clip(I_l, 0.0, 1.0)
    caption = emb.source_text
    meta = {"rng_seed": rng_seed, "clamped": bool(clamp_endpoints)}
    if expert_s is not None:
        meta["expert_s"] = int(expert_s)
    return VideoClip(frames=frames, fps=fps, caption=caption, meta=meta)
