"""Denoiser hyperparameters and validation."""

from __future__ import annotations

from dataclasses import dataclass, asdict

from ..errors import ConfigurationError

PREDICTION_TARGETS = ("epsilon", "velocity")
SCHEDULE_KINDS = ("linear", "cosine")


@dataclass
class DenoiserConfig:
    """Shape and training hyperparameters of the tiny video denoiser.

    The "latent" is the pixel tensor, optionally average-pooled 2x along
    both spatial axes (latent_pool=2); channels stay equal to the pixel
    channel count. Model input channels are latent + guidance + one mask
    channel.
    """

    height: int = 32
    width: int = 32
    channels: int = 3
    latent_pool: int = 1
    patch_size: tuple[int, int, int] = (1, 4, 4)
    embed_dim: int = 96
    num_layers: int = 3
    num_heads: int = 4
    d_text: int = 64
    n_text_tokens: int = 8
    mlp_ratio: int = 4
    max_frames: int = 81
    noise_steps: int = 200
    prediction_target: str = "epsilon"
    schedule_kind: str = "linear"
    beta_min: float = 1e-4
    beta_max: float = 0.15

    def __post_init__(self) -> None:
        self.patch_size = tuple(self.patch_size)  # type: ignore[assignment]
        if len(self.patch_size) != 3 or any(p < 1 for p in self.patch_size):
            raise ConfigurationError(
                f"patch_size must be three positive ints, got {self.patch_size}"
            )
        if self.embed_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by num_heads "
                f"{self.num_heads}"
            )
        if self.latent_pool not in (1, 2):
            raise ConfigurationError(
                f"latent_pool must be 1 or 2, got {self.latent_pool}"
            )
        if self.max_frames < 81:
            raise ConfigurationError(
                f"max_frames must be >= 81, got {self.max_frames}"
            )
        if self.prediction_target not in PREDICTION_TARGETS:
            raise ConfigurationError(
                f"prediction_target must be one of {PREDICTION_TARGETS}, "
                f"got {self.prediction_target!r}"
            )
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ConfigurationError(
                f"schedule_kind must be one of {SCHEDULE_KINDS}, "
                f"got {self.schedule_kind!r}"
            )
        if self.noise_steps < 2:
            raise ConfigurationError(
                f"noise_steps must be >= 2, got {self.noise_steps}"
            )
        lh, lw = self.latent_height, self.latent_width
        _, ph, pw = self.patch_size
        if lh % ph != 0:
            raise ConfigurationError(
                f"latent height {lh} not divisible by patch height {ph}"
            )
        if lw % pw != 0:
            raise ConfigurationError(
                f"latent width {lw} not divisible by patch width {pw}"
            )

    @property
    def latent_height(self) -> int:
        if self.height % self.latent_pool != 0:
            raise ConfigurationError(
                f"height {self.height} not divisible by latent_pool "
                f"{self.latent_pool}"
            )
        return self.height // self.latent_pool

    @property
    def latent_width(self) -> int:
        if self.width % self.latent_pool != 0:
            raise ConfigurationError(
                f"width {self.width} not divisible by latent_pool "
                f"{self.latent_pool}"
            )
        return self.width // self.latent_pool

    @property
    def latent_channels(self) -> int:
        return self.channels

    @property
    def in_channels(self) -> int:
        """Latent + guidance frames + one broadcast mask channel."""
        return 2 * self.latent_channels + 1

    @property
    def spatial_tokens(self) -> int:
        _, ph, pw = self.patch_size
        return (self.latent_height // ph) * (self.latent_width // pw)

    @property
    def max_time_tokens(self) -> int:
        pt = self.patch_size[0]
        return (self.max_frames + pt - 1) // pt

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch_size"] = list(self.patch_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        if "patch_size" in d:
            d["patch_size"] = tuple(d["patch_size"])
        return cls(**d)
