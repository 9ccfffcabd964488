"""semfi: desk-scale semantic frame interpolation.

A tiny text- and endpoint-conditioned video diffusion transformer with a
frame-count-routed mixture of low-rank adapters, a synthetic data curation
pipeline, and a proxy-metric benchmark suite.
"""

from .types import TextEmbedding, VideoClip
from .conditioning import (
    GuidancePack,
    RandomProjectionImageEncoder,
    assemble_model_input,
    build_guidance_frames,
    build_guidance_pack,
    build_mask,
    condition_embedding,
)
from .mol import (
    DEFAULT_FRAME_COUNTS,
    LoraAdapter,
    MoLState,
    apply_lora,
    apply_unmerged,
    create_mol_state,
    effective_delta,
    init_adapter,
    route,
    trainable_parameters,
)

__version__ = "0.1.0"

__all__ = [
    "TextEmbedding",
    "VideoClip",
    "GuidancePack",
    "RandomProjectionImageEncoder",
    "assemble_model_input",
    "build_guidance_frames",
    "build_guidance_pack",
    "build_mask",
    "condition_embedding",
    "DEFAULT_FRAME_COUNTS",
    "LoraAdapter",
    "MoLState",
    "apply_lora",
    "apply_unmerged",
    "create_mol_state",
    "effective_delta",
    "init_adapter",
    "route",
    "trainable_parameters",
    "__version__",
]
