from .metrics import (
    aesthetic_quality,
    average_interpolator,
    dynamic_degree,
    flow_warp_interpolator,
    frame_fidelity,
    frechet_feature_distance,
    imaging_quality,
    motion_smoothness,
    perceptual_distance,
    psnr,
    semantic_fidelity,
    ssim,
    temporal_flickering,
)
from .embedders import (
    JointProbeEmbedder,
    RandomConvEmbedder,
    fit_probe_on_synthetic,
    video_descriptor,
)
from .report import (
    BenchReport,
    MetricResult,
    PROXY_BANNER,
    VARIANCE_SENTINEL,
    cross_scale_variance,
    log10_variance,
    write_charts,
    write_csv,
    write_markdown,
    write_per_clip_csv,
)
from .run import (
    ALL_METRICS,
    BenchConfig,
    ClipDirSource,
    GroundTruthSource,
    bench_run,
)

__all__ = [
    "aesthetic_quality",
    "average_interpolator",
    "dynamic_degree",
    "flow_warp_interpolator",
    "frame_fidelity",
    "frechet_feature_distance",
    "imaging_quality",
    "motion_smoothness",
    "perceptual_distance",
    "psnr",
    "semantic_fidelity",
    "ssim",
    "temporal_flickering",
    "JointProbeEmbedder",
    "RandomConvEmbedder",
    "fit_probe_on_synthetic",
    "video_descriptor",
    "BenchReport",
    "MetricResult",
    "PROXY_BANNER",
    "VARIANCE_SENTINEL",
    "cross_scale_variance",
    "log10_variance",
    "write_charts",
    "write_csv",
    "write_markdown",
    "write_per_clip_csv",
    "ALL_METRICS",
    "BenchConfig",
    "ClipDirSource",
    "GroundTruthSource",
    "bench_run",
]
