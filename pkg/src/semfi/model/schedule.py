"""Diffusion noise schedule.

Coefficients are kept in float64 so round-trips through the forward process
stay accurate even at the nearly-noise end of the ladder; callers cast to
float32 at the tensor boundary.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, RangeError


class NoiseSchedule:
    """Beta ladder with cumulative products and the usual coefficient views.

    Signal coefficient sqrt(alpha_bar) starts at ~1 and ends at ~0 (both
    within 1e-3); violating defaults are rejected at construction.
    """

    def __init__(
        self,
        noise_steps: int,
        kind: str = "linear",
        beta_min: float = 1e-4,
        beta_max: float = 0.15,
    ):
        if noise_steps < 2:
            raise ConfigurationError(f"need at least 2 steps, got {noise_steps}")
        self.noise_steps = noise_steps
        self.kind = kind
        if kind == "linear":
            betas = np.linspace(beta_min, beta_max, noise_steps, dtype=np.float64)
        elif kind == "cosine":
            s = 0.008
            t = np.arange(noise_steps + 1, dtype=np.float64) / noise_steps
            f = np.cos((t + s) / (1 + s) * np.pi / 2) ** 2
            alpha_bar = f / f[0]
            betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 0.0, 0.999)
        else:
            raise ConfigurationError(f"unknown schedule kind {kind!r}")
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bar = np.cumprod(self.alphas)
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ConfigurationError("noise level must increase monotonically")
        if abs(np.sqrt(self.alpha_bar[0]) - 1.0) > 1e-3:
            raise ConfigurationError(
                f"signal coefficient at step 0 is "
                f"{np.sqrt(self.alpha_bar[0]):.6f}, expected ~1"
            )
        if np.sqrt(self.alpha_bar[-1]) > 1e-3:
            raise ConfigurationError(
                f"signal coefficient at the final step is "
                f"{np.sqrt(self.alpha_bar[-1]):.2e}, expected ~0"
            )

    def _check_t(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t >= self.noise_steps):
            raise RangeError(
                f"timestep out of range [0, {self.noise_steps}): {t}"
            )
        return t

    def signal_coeff(self, t) -> np.ndarray:
        return np.sqrt(self.alpha_bar[self._check_t(t)])

    def noise_coeff(self, t) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bar[self._check_t(t)])

    def add_noise(self, x0, eps, t):
        """Forward process q(x_t | x0) for scalar or per-sample t."""
        s = self.signal_coeff(t)
        n = self.noise_coeff(t)
        while np.ndim(s) < np.ndim(x0):
            s = np.expand_dims(s, -1)
            n = np.expand_dims(n, -1)
        return s * x0 + n * eps

    def reconstruct_x0(self, noisy, eps, t):
        """Invert the forward process given the true noise."""
        s = self.signal_coeff(t)
        n = self.noise_coeff(t)
        while np.ndim(s) < np.ndim(noisy):
            s = np.expand_dims(s, -1)
            n = np.expand_dims(n, -1)
        return (noisy - n * eps) / s

    def velocity(self, x0, eps, t):
        """v-parameterization target: sqrt(ab)*eps - sqrt(1-ab)*x0."""
        s = self.signal_coeff(t)
        n = self.noise_coeff(t)
        while np.ndim(s) < np.ndim(x0):
            s = np.expand_dims(s, -1)
            n = np.expand_dims(n, -1)
        return s * eps - n * x0

    def sampling_times(self, steps: int) -> np.ndarray:
        """Descending timestep subset for a `steps`-step sampler."""
        if steps < 1:
            raise RangeError(f"need at least 1 sampling step, got {steps}")
        steps = min(steps, self.noise_steps)
        times = np.round(
            np.linspace(self.noise_steps - 1, 0, steps)
        ).astype(np.int64)
        return np.unique(times)[::-1]
