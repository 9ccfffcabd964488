import numpy as np
import pytest
import torch

from semfi.conditioning import RandomProjectionImageEncoder
from semfi.model import (
    Denoiser,
    DenoiserConfig,
    NoiseSchedule,
    PixelCodec,
    TextEncoder,
)
from semfi.mol import create_mol_state
from semfi.types import VideoClip


@pytest.fixture(scope="session", autouse=True)
def _single_thread():
    torch.set_num_threads(1)


TINY_MODEL = dict(
    height=16,
    width=16,
    channels=1,
    embed_dim=32,
    num_layers=1,
    num_heads=2,
    d_text=16,
    n_text_tokens=4,
    noise_steps=50,
    schedule_kind="cosine",
)


def make_bundle(mol_rank=4, frame_counts=(5, 9, 17, 33, 65, 81), seed=0,
                **cfg_overrides):
    cfg = DenoiserConfig(**{**TINY_MODEL, **cfg_overrides})
    model = Denoiser(cfg, seed=seed)
    schedule = NoiseSchedule(
        cfg.noise_steps, cfg.schedule_kind, cfg.beta_min, cfg.beta_max
    )
    codec = PixelCodec(cfg.latent_pool)
    text_encoder = TextEncoder(cfg.d_text, n_tokens=cfg.n_text_tokens, seed=101)
    image_encoder = RandomProjectionImageEncoder(cfg.d_text, seed=202)
    mol = create_mol_state(
        model.covered_layer_shapes(), rank=mol_rank, seed=seed + 1,
        frame_counts=frame_counts,
    )
    return cfg, model, schedule, codec, text_encoder, image_encoder, mol


@pytest.fixture
def tiny_bundle():
    return make_bundle()


def random_clip(rng, n=9, h=16, w=16, c=1, fps=8, caption=""):
    frames = rng.random((n, h, w, c)).astype(np.float32)
    return VideoClip(frames=frames, fps=fps, caption=caption)
