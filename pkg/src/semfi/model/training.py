"""Single-step training machinery.

A batch is a list of (VideoClip, TextEmbedding) pairs that all share one
frame count, so a single expert adapter is routed for the whole step. The
optimizer covers every parameter that may ever train in the current stage;
experts that were not routed receive no gradient and are skipped, which
keeps their Adam state untouched as well.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

from ..conditioning import (
    GuidancePack,
    assemble_model_input,
    build_first_frame_pack,
    build_guidance_pack,
)
from ..errors import BatchingError
from ..mol import MoLState, trainable_parameters
from ..rng import child_seed
from ..types import TextEmbedding, VideoClip
from .codec import PixelCodec
from .denoiser import Denoiser
from .schedule import NoiseSchedule


@dataclass
class TrainState:
    """Everything a training step needs, bundled.

    train_base / adapters_active select the stage: base pretraining runs
    with (True, False), adapter fine-tuning with (False, True), and the
    from-scratch joint mode with (True, True). dual_endpoint picks between
    first-frame-only packs (I2V-style pretraining) and full dual-endpoint
    conditioning.
    """

    model: Denoiser
    schedule: NoiseSchedule
    codec: PixelCodec
    mol: MoLState | None
    optimizer: torch.optim.Optimizer
    image_encoder: object
    train_base: bool = True
    adapters_active: bool = False
    dual_endpoint: bool = True
    endpoint_loss_weight: float = 1.0

    def set_stage(self, train_base: bool, adapters_active: bool, lr: float) -> None:
        """Reconfigure trainables and rebuild the optimizer for a new stage."""
        self.train_base = train_base
        self.adapters_active = adapters_active
        for p in self.model.parameters():
            p.requires_grad_(train_base)
        params: list[torch.nn.Parameter] = []
        if train_base:
            params.extend(self.model.parameters())
        if adapters_active and self.mol is not None:
            params.extend(self.mol.parameters())
        self.optimizer = torch.optim.AdamW(params, lr=lr, weight_decay=0.0)


def make_train_state(
    model: Denoiser,
    schedule: NoiseSchedule,
    codec: PixelCodec,
    mol: MoLState | None,
    image_encoder,
    lr: float = 1e-4,
    train_base: bool = True,
    adapters_active: bool = False,
    dual_endpoint: bool = True,
    endpoint_loss_weight: float = 1.0,
) -> TrainState:
    state = TrainState(
        model=model,
        schedule=schedule,
        codec=codec,
        mol=mol,
        optimizer=torch.optim.AdamW(model.parameters(), lr=lr),
        image_encoder=image_encoder,
        dual_endpoint=dual_endpoint,
        endpoint_loss_weight=endpoint_loss_weight,
    )
    state.set_stage(train_base, adapters_active, lr)
    return state


def _build_pack(state: TrainState, clip: VideoClip) -> GuidancePack:
    if state.dual_endpoint:
        return build_guidance_pack(
            clip.first_frame(),
            clip.last_frame(),
            clip.num_frames,
            state.image_encoder,
            frame_encoder=state.codec.encode_frame,
        )
    return build_first_frame_pack(
        clip.first_frame(),
        clip.num_frames,
        state.image_encoder,
        frame_encoder=state.codec.encode_frame,
    )


def prepare_batch(
    state: TrainState,
    batch: Sequence[tuple[VideoClip, TextEmbedding]],
    rng_seed: int,
) -> tuple[torch.Tensor, ...]:
    """Noise the batch and assemble model inputs; returns training tensors."""
    if not batch:
        raise BatchingError("empty batch")
    counts = {clip.num_frames for clip, _ in batch}
    if len(counts) != 1:
        raise BatchingError(
            f"all clips in a batch must share a frame count, got {sorted(counts)}"
        )
    n = counts.pop()
    gen = torch.Generator().manual_seed(child_seed(rng_seed, "step"))
    sched = state.schedule
    t = torch.randint(0, sched.noise_steps, (len(batch),), generator=gen)
    x0 = torch.stack(
        [torch.from_numpy(state.codec.encode(clip.frames)) for clip, _ in batch]
    )
    eps = torch.randn(x0.shape, generator=gen)
    sig = torch.from_numpy(sched.signal_coeff(t.numpy())).float()
    noi = torch.from_numpy(sched.noise_coeff(t.numpy())).float()
    sig = sig.view(-1, 1, 1, 1, 1)
    noi = noi.view(-1, 1, 1, 1, 1)
    noisy = sig * x0 + noi * eps
    if state.model.cfg.prediction_target == "velocity":
        target = sig * eps - noi * x0
    else:
        target = eps
    packs = [_build_pack(state, clip) for clip, _ in batch]
    assembled = torch.stack(
        [assemble_model_input(noisy[i], pack) for i, pack in enumerate(packs)]
    )
    text_tokens = torch.stack(
        [torch.from_numpy(text.tokens) for _, text in batch]
    )
    cond = torch.stack(
        [torch.from_numpy(pack.cond_embedding) for pack in packs]
    )
    # per-frame loss weights: conditioned positions can be emphasized
    w = float(state.endpoint_loss_weight)
    masks = torch.stack([torch.from_numpy(pack.mask) for pack in packs])
    weights = (1.0 + (w - 1.0) * masks).view(len(batch), n, 1, 1, 1)
    return assembled, t, text_tokens, cond, target, weights, torch.tensor(n)


def training_step(
    state: TrainState,
    batch: Sequence[tuple[VideoClip, TextEmbedding]],
    rng_seed: int,
) -> float:
    """One optimization step; returns the scalar loss.

    Only the stage's trainable parameters move: frozen-base stages leave
    every base weight bit-identical, and a batch at frame count N updates
    the universal adapter plus expert route(N) alone. The squared error is
    a weighted mean over positions (uniform unless endpoint_loss_weight
    emphasizes the conditioned frames).
    """
    assembled, t, text_tokens, cond, target, weights, n = prepare_batch(
        state, batch, rng_seed
    )
    adapters = None
    if state.adapters_active and state.mol is not None:
        adapters = state.mol.active_factors(int(n))
    pred = state.model(assembled, t, text_tokens, cond, adapters)
    sq = (pred - target) ** 2
    loss = (weights * sq).sum() / (weights.expand_as(sq)).sum()
    if not torch.isfinite(loss):
        raise FloatingPointError(f"non-finite training loss: {loss.item()}")
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    return float(loss.item())


def parameter_checksum(named: Iterable[tuple[str, torch.Tensor]]) -> str:
    """SHA-256 over sorted (name, raw bytes); detects any parameter drift."""
    h = hashlib.sha256()
    for name, p in sorted(named, key=lambda kv: kv[0]):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(p.detach().numpy()).tobytes())
    return h.hexdigest()


def mol_expert_checksums(mol: MoLState) -> dict[str, str]:
    """Per-adapter checksums, for gradient-isolation proofs."""
    out = {"universal": parameter_checksum(mol.universal.factors.items())}
    for s in mol.frame_counts:
        out[f"expert_{s}"] = parameter_checksum(mol.expert(s).factors.items())
    return out


__all__ = [
    "TrainState",
    "make_train_state",
    "prepare_batch",
    "training_step",
    "parameter_checksum",
    "mol_expert_checksums",
    "trainable_parameters",
]
