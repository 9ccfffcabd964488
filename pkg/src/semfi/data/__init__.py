from .clipio import read_clip, write_clip
from .synth import SynthConfig, synth_generate, synth_video, caption_from_shapes
from .flow import ConstantFlow, CoarseToFineFlow, GlobalShiftFlow, make_flow_estimator
from .curate import (
    ExternalCaptioner,
    PixelFeatureExtractor,
    ProceduralCaptioner,
    ScoreThresholds,
    annotate,
    clip_score,
    filter_candidates,
    flow_score,
    multi_scale_cut,
    read_manifest,
    threshold_filter,
    validate_manifest,
    write_manifest,
)
from .pipeline import DataPipelineConfig, run_all, run_stage, STAGES

__all__ = [
    "read_clip",
    "write_clip",
    "SynthConfig",
    "synth_generate",
    "synth_video",
    "caption_from_shapes",
    "ConstantFlow",
    "CoarseToFineFlow",
    "GlobalShiftFlow",
    "make_flow_estimator",
    "ExternalCaptioner",
    "PixelFeatureExtractor",
    "ProceduralCaptioner",
    "ScoreThresholds",
    "annotate",
    "clip_score",
    "filter_candidates",
    "flow_score",
    "multi_scale_cut",
    "read_manifest",
    "threshold_filter",
    "validate_manifest",
    "write_manifest",
    "DataPipelineConfig",
    "run_all",
    "run_stage",
    "STAGES",
]
