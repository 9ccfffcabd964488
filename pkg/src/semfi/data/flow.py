"""Dense optical flow estimators.

All estimators map two frames to a per-pixel displacement field [H, W, 2]
ordered (dx, dy), and all are deterministic, so flow-derived scores are
reproducible. The coarse-to-fine estimator is the default for real scoring;
the global-shift estimator recovers uniform translations exactly and serves
as the known-truth reference on synthetic shifted pairs.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..conditioning import to_grayscale
from ..errors import ShapeError


class ConstantFlow:
    """Returns a fixed uniform flow regardless of input; a test stub."""

    def __init__(self, dx: float, dy: float):
        self.dx = dx
        self.dy = dy

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        h, w = to_grayscale(np.asarray(a, dtype=np.float32)).shape
        out = np.empty((h, w, 2), dtype=np.float32)
        out[..., 0] = self.dx
        out[..., 1] = self.dy
        return out


class GlobalShiftFlow:
    """Exhaustive integer-shift search under circular wrap.

    Finds the (dx, dy) in [-max_shift, max_shift]^2 minimizing the MSE of
    np.roll(a, (dy, dx)) against b, preferring the smallest |shift| on ties,
    and returns it as a uniform field. Exact for circularly shifted pairs;
    identical frames give zero flow.
    """

    def __init__(self, max_shift: int = 8):
        self.max_shift = max_shift

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ga = to_grayscale(np.asarray(a, dtype=np.float64))
        gb = to_grayscale(np.asarray(b, dtype=np.float64))
        if ga.shape != gb.shape:
            raise ShapeError(f"frame shapes differ: {ga.shape} vs {gb.shape}")
        best = (np.inf, 0.0, 0, 0)
        for dy in range(-self.max_shift, self.max_shift + 1):
            for dx in range(-self.max_shift, self.max_shift + 1):
                err = float(
                    np.mean((np.roll(ga, (dy, dx), axis=(0, 1)) - gb) ** 2)
                )
                key = (err, float(np.hypot(dx, dy)), dy, dx)
                if key < best:
                    best = key
        _, _, dy, dx = best
        out = np.empty(ga.shape + (2,), dtype=np.float32)
        out[..., 0] = dx
        out[..., 1] = dy
        return out


class CoarseToFineFlow:
    """Pyramidal Lucas-Kanade dense flow with iterative warping.

    Classical scheme: block-mean pyramid, flow upsampled and refined at
    each level by solving the windowed 2x2 normal equations per pixel. Not
    state of the art, but consistent: identical frames yield exactly zero.
    """

    def __init__(self, levels: int = 3, iters: int = 3, window: int = 5,
                 ridge: float = 1e-3):
        self.levels = levels
        self.iters = iters
        self.window = window
        self.ridge = ridge

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ga = to_grayscale(np.asarray(a, dtype=np.float64))
        gb = to_grayscale(np.asarray(b, dtype=np.float64))
        if ga.shape != gb.shape:
            raise ShapeError(f"frame shapes differ: {ga.shape} vs {gb.shape}")
        pyr_a, pyr_b = [ga], [gb]
        for _ in range(self.levels - 1):
            if min(pyr_a[-1].shape) < 2 * self.window:
                break
            pyr_a.append(_halve(pyr_a[-1]))
            pyr_b.append(_halve(pyr_b[-1]))
        flow = np.zeros(pyr_a[-1].shape + (2,), dtype=np.float64)
        for lvl in range(len(pyr_a) - 1, -1, -1):
            fa, fb = pyr_a[lvl], pyr_b[lvl]
            if flow.shape[:2] != fa.shape:
                flow = _upsample_flow(flow, fa.shape)
            for _ in range(self.iters):
                flow = self._refine(fa, fb, flow)
        return flow.astype(np.float32)

    def _refine(self, a: np.ndarray, b: np.ndarray, flow: np.ndarray) -> np.ndarray:
        h, w = a.shape
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        sample_x = np.clip(xx + flow[..., 0], 0, w - 1)
        sample_y = np.clip(yy + flow[..., 1], 0, h - 1)
        warped = ndimage.map_coordinates(b, [sample_y, sample_x], order=1,
                                         mode="nearest")
        ix = np.gradient(a, axis=1)
        iy = np.gradient(a, axis=0)
        it = warped - a
        win = self.window
        sxx = ndimage.uniform_filter(ix * ix, win) + self.ridge
        syy = ndimage.uniform_filter(iy * iy, win) + self.ridge
        sxy = ndimage.uniform_filter(ix * iy, win)
        sxt = ndimage.uniform_filter(ix * it, win)
        syt = ndimage.uniform_filter(iy * it, win)
        det = sxx * syy - sxy * sxy
        det = np.where(np.abs(det) < 1e-12, 1e-12, det)
        du = -(syy * sxt - sxy * syt) / det
        dv = -(sxx * syt - sxy * sxt) / det
        out = flow.copy()
        out[..., 0] += du
        out[..., 1] += dv
        return out


def _halve(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    return img[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _upsample_flow(flow: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    sy = h / flow.shape[0]
    sx = w / flow.shape[1]
    yy = np.clip((np.arange(h) / sy).astype(int), 0, flow.shape[0] - 1)
    xx = np.clip((np.arange(w) / sx).astype(int), 0, flow.shape[1] - 1)
    up = flow[np.ix_(yy, xx)].copy()
    up[..., 0] *= sx
    up[..., 1] *= sy
    return up


FLOW_ESTIMATORS = {
    "coarse2fine": CoarseToFineFlow,
    "global_shift": GlobalShiftFlow,
}


def make_flow_estimator(name: str, **kwargs):
    if name not in FLOW_ESTIMATORS:
        raise ShapeError(
            f"unknown flow estimator {name!r}; choices: {sorted(FLOW_ESTIMATORS)}"
        )
    return FLOW_ESTIMATORS[name](**kwargs)
