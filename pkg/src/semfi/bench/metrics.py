"""Benchmark metrics over generated/ground-truth clip pairs.

Frame metrics (PSNR, SSIM) follow their textbook definitions with a fixed
data range of 1.0. Perceptual and distribution distances run on a pluggable
frame embedder (seeded random conv features by default), so absolute values
are proxies, not comparable to scores from pretrained towers. The video
quality scores are 1 - normalized-MAE so higher is always better.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import ndimage

from ..conditioning import to_grayscale
from ..errors import (
    PairingError,
    PredictorNotConfigured,
    RangeError,
    ShapeError,
    StatisticsError,
)
from ..data.curate import flow_score
from ..types import VideoClip

PSNR_CAP = 99.0


def _frames(x) -> np.ndarray:
    if isinstance(x, VideoClip):
        return x.frames
    return np.asarray(x, dtype=np.float32)


def psnr(a, b, cap: float = PSNR_CAP) -> float:
    """10*log10(1/MSE) for unit data range, capped for identical inputs."""
    fa, fb = _frames(a), _frames(b)
    if fa.shape != fb.shape:
        raise ShapeError(f"psnr shapes differ: {fa.shape} vs {fb.shape}")
    mse = float(np.mean((fa.astype(np.float64) - fb.astype(np.float64)) ** 2))
    if mse <= 0.0:
        return cap
    return min(10.0 * math.log10(1.0 / mse), cap)


def ssim(a, b, window: int = 7, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 1.0) -> float:
    """Windowed structural similarity on grayscale frames."""
    ga = to_grayscale(_frames(a)) if _frames(a).ndim == 3 else _frames(a)
    gb = to_grayscale(_frames(b)) if _frames(b).ndim == 3 else _frames(b)
    if ga.shape != gb.shape:
        raise ShapeError(f"ssim shapes differ: {ga.shape} vs {gb.shape}")
    if min(ga.shape) < window:
        raise ShapeError(
            f"frame {ga.shape} smaller than ssim window {window}"
        )
    ga = ga.astype(np.float64)
    gb = gb.astype(np.float64)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = ndimage.uniform_filter(ga, window)
    mu_b = ndimage.uniform_filter(gb, window)
    var_a = ndimage.uniform_filter(ga * ga, window) - mu_a**2
    var_b = ndimage.uniform_filter(gb * gb, window) - mu_b**2
    cov = ndimage.uniform_filter(ga * gb, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def perceptual_distance(a, b, embedder: Callable) -> float:
    """Mean over frames of L2 distance between unit-normalized embeddings."""
    fa, fb = _frames(a), _frames(b)
    if fa.ndim == 3:
        fa = fa[None]
    if fb.ndim == 3:
        fb = fb[None]
    if fa.shape[0] != fb.shape[0]:
        raise PairingError(
            f"clips have {fa.shape[0]} vs {fb.shape[0]} frames"
        )
    dists = []
    for i in range(fa.shape[0]):
        ea = _unit(np.asarray(embedder(fa[i]), dtype=np.float64))
        eb = _unit(np.asarray(embedder(fb[i]), dtype=np.float64))
        dists.append(float(np.linalg.norm(ea - eb)))
    return float(np.mean(dists))


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def frechet_feature_distance(gen_set, gt_set, embedder: Callable) -> float:
    """Frechet distance between Gaussians fit to frame-level features.

    |mu1-mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}); the matrix square root
    goes through the symmetric eigendecomposition of S2^{1/2} S1 S2^{1/2}
    with negative eigenvalues clamped to zero.
    """
    fa, fb = _frames(gen_set), _frames(gt_set)
    if fa.ndim == 3:
        fa = fa[None]
    if fb.ndim == 3:
        fb = fb[None]
    if fa.shape[0] < 2 or fb.shape[0] < 2:
        raise StatisticsError(
            f"need at least 2 frames per set, got {fa.shape[0]} and {fb.shape[0]}"
        )
    feat_a = np.stack([np.asarray(embedder(f), dtype=np.float64) for f in fa])
    feat_b = np.stack([np.asarray(embedder(f), dtype=np.float64) for f in fb])
    mu_a, mu_b = feat_a.mean(axis=0), feat_b.mean(axis=0)
    sig_a = np.cov(feat_a, rowvar=False)
    sig_b = np.cov(feat_b, rowvar=False)
    tr_sqrt = _trace_sqrt_product(sig_a, sig_b)
    d2 = float(np.sum((mu_a - mu_b) ** 2))
    fd = d2 + float(np.trace(sig_a) + np.trace(sig_b)) - 2.0 * tr_sqrt
    return max(fd, 0.0)


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _trace_sqrt_product(sig_a: np.ndarray, sig_b: np.ndarray,
                        sym_tol: float = 1e-8) -> float:
    root_b = _sqrt_psd(sig_b)
    inner = root_b @ sig_a @ root_b
    residual = float(np.max(np.abs(inner - inner.T)))
    scale = max(1.0, float(np.max(np.abs(inner))))
    if residual > sym_tol * scale:
        raise StatisticsError(
            f"covariance product asymmetric beyond tolerance "
            f"({residual:.3e} > {sym_tol:.0e} * {scale:.3e})"
        )
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    return float(np.sum(np.sqrt(np.clip(vals, 0.0, None))))


def temporal_flickering(clip) -> float:
    """1 - mean consecutive-frame MAE; 1.0 for a static clip."""
    f = _frames(clip)
    if f.shape[0] < 2:
        raise RangeError(f"temporal flickering needs >= 2 frames, got {f.shape[0]}")
    maes = np.mean(np.abs(np.diff(f.astype(np.float64), axis=0)), axis=(1, 2, 3))
    return float(1.0 - np.mean(maes))


def average_interpolator(prev: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    return (prev + nxt) / 2.0


def flow_warp_interpolator(flow_estimator: Callable) -> Callable:
    """Midpoint interpolation by warping the left neighbor half-way."""

    def interp(prev: np.ndarray, nxt: np.ndarray) -> np.ndarray:
        flow = np.asarray(flow_estimator(prev, nxt), dtype=np.float64)
        h, w = flow.shape[:2]
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        sx = np.clip(xx - 0.5 * flow[..., 0], 0, w - 1)
        sy = np.clip(yy - 0.5 * flow[..., 1], 0, h - 1)
        out = np.empty_like(np.asarray(prev, dtype=np.float64))
        for c in range(out.shape[-1]):
            out[..., c] = ndimage.map_coordinates(
                np.asarray(prev, dtype=np.float64)[..., c], [sy, sx], order=1,
                mode="nearest",
            )
        return out

    return interp


def motion_smoothness(clip, interpolator: Callable | None = None) -> float:
    """Drop odd frames, rebuild them from even neighbors, score 1 - MAE."""
    f = _frames(clip).astype(np.float64)
    n = f.shape[0]
    if n < 3:
        raise RangeError(f"motion smoothness needs >= 3 frames, got {n}")
    interp = interpolator or average_interpolator
    errors = []
    for i in range(1, n - 1, 2):
        recon = interp(f[i - 1], f[i + 1])
        errors.append(float(np.mean(np.abs(f[i] - recon))))
    return float(1.0 - np.mean(errors))


def dynamic_degree(clip, flow_estimator: Callable) -> float:
    """Mean endpoint flow score over consecutive frame pairs."""
    f = _frames(clip)
    if f.shape[0] < 2:
        raise RangeError(f"dynamic degree needs >= 2 frames, got {f.shape[0]}")
    scores = [
        flow_score(f[i], f[i + 1], flow_estimator) for i in range(f.shape[0] - 1)
    ]
    return float(np.mean(scores))


def frame_fidelity(generated, I_f: np.ndarray, I_l: np.ndarray,
                   embedder: Callable) -> dict[str, float]:
    """Endpoint adherence: PSNR/SSIM/perceptual at positions 0 and N-1."""
    f = _frames(generated)
    I_f = np.asarray(I_f, dtype=np.float32)
    I_l = np.asarray(I_l, dtype=np.float32)
    if f[0].shape != I_f.shape or f[-1].shape != I_l.shape:
        raise ShapeError(
            f"endpoint shapes differ: clip {f[0].shape}, refs "
            f"{I_f.shape}/{I_l.shape}"
        )
    out = {
        "psnr_first": psnr(f[0], I_f),
        "psnr_last": psnr(f[-1], I_l),
        "ssim_first": ssim(f[0], I_f),
        "ssim_last": ssim(f[-1], I_l),
        "perceptual_first": perceptual_distance(f[0], I_f, embedder),
        "perceptual_last": perceptual_distance(f[-1], I_l, embedder),
    }
    out["psnr_mean"] = (out["psnr_first"] + out["psnr_last"]) / 2.0
    out["ssim_mean"] = (out["ssim_first"] + out["ssim_last"]) / 2.0
    out["perceptual_mean"] = (
        out["perceptual_first"] + out["perceptual_last"]
    ) / 2.0
    return out


def semantic_fidelity(clip, text: str, joint_embedder) -> float:
    """Cosine similarity of the clip and prompt in the joint space."""
    return joint_embedder.similarity(clip, text)


def aesthetic_quality(clip, predictor: Callable | None = None) -> float:
    """Frame-wise aesthetic score; needs an external pretrained predictor."""
    if predictor is None:
        raise PredictorNotConfigured("predictor not configured")
    f = _frames(clip)
    return float(np.mean([predictor(frame) for frame in f]))


def imaging_quality(clip, predictor: Callable | None = None) -> float:
    """Frame-wise image-quality score; needs an external pretrained predictor."""
    if predictor is None:
        raise PredictorNotConfigured("predictor not configured")
    f = _frames(clip)
    return float(np.mean([predictor(frame) for frame in f]))
