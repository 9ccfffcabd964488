"""Synthetic video corpus.

Each video shows one to three colored shapes (circle, square, triangle)
moving along parameterized trajectories (linear drift, circular orbit,
enter/exit through a frame edge) over a plain background. Captions are
templated from the shape metadata, so color/shape/direction words in the
text always describe the pixels. Everything derives from (config, seed)
through per-video child seeds: generation order never changes the output.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigurationError
from ..rng import np_rng
from ..types import VideoClip

PALETTE = (
    ("red", (0.90, 0.15, 0.15)),
    ("green", (0.15, 0.80, 0.20)),
    ("blue", (0.20, 0.30, 0.90)),
    ("yellow", (0.95, 0.90, 0.20)),
    ("magenta", (0.85, 0.20, 0.80)),
    ("cyan", (0.20, 0.85, 0.85)),
    ("orange", (0.95, 0.55, 0.10)),
    ("white", (0.95, 0.95, 0.95)),
)

LINEAR_DIRECTIONS = {
    "right": (1.0, 0.0),
    "left": (-1.0, 0.0),
    "down": (0.0, 1.0),
    "up": (0.0, -1.0),
}

EDGES = ("left", "right", "top", "bottom")


@dataclass
class SynthConfig:
    num_videos: int = 60
    height: int = 32
    width: int = 32
    channels: int = 3
    fps_choices: tuple[int, ...] = (8, 12, 16, 24, 30)
    frames_min: int = 81
    frames_max: int = 324
    shapes_min: int = 1
    shapes_max: int = 3
    motion_amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.channels not in (1, 3):
            raise ConfigurationError(
                f"channels must be 1 or 3, got {self.channels}"
            )
        if self.frames_min < 2 or self.frames_max < self.frames_min:
            raise ConfigurationError(
                f"bad frame-count range [{self.frames_min}, {self.frames_max}]"
            )
        if not (1 <= self.shapes_min <= self.shapes_max):
            raise ConfigurationError(
                f"bad shape-count range [{self.shapes_min}, {self.shapes_max}]"
            )
        self.fps_choices = tuple(self.fps_choices)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fps_choices"] = list(self.fps_choices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "fps_choices" in d:
            d["fps_choices"] = tuple(d["fps_choices"])
        return cls(**d)


def _sample_shape(rng: np.random.Generator, amplitude: float) -> dict:
    kind = rng.choice(("circle", "square", "triangle"))
    color_name, color = PALETTE[rng.integers(0, len(PALETTE))]
    size = float(rng.uniform(0.10, 0.22))
    motion = rng.choice(("linear", "circular", "enter_exit"))
    spec: dict = {
        "kind": str(kind),
        "color_name": color_name,
        "color": list(color),
        "size": size,
        "motion": str(motion),
    }
    if motion == "linear":
        direction = str(rng.choice(tuple(LINEAR_DIRECTIONS)))
        travel = float(rng.uniform(0.3, 0.6)) * amplitude
        dx, dy = LINEAR_DIRECTIONS[direction]
        start = [float(rng.uniform(0.25, 0.75)), float(rng.uniform(0.25, 0.75))]
        spec.update(
            direction=direction,
            start=start,
            delta=[dx * travel, dy * travel],
        )
    elif motion == "circular":
        spec.update(
            center=[float(rng.uniform(0.35, 0.65)), float(rng.uniform(0.35, 0.65))],
            orbit=float(rng.uniform(0.15, 0.28)),
            theta0=float(rng.uniform(0.0, 2 * np.pi)),
            sweep=float(rng.uniform(np.pi / 2, 2 * np.pi))
            * amplitude
            * float(rng.choice((-1.0, 1.0))),
        )
    else:  # enter_exit
        edge = str(rng.choice(EDGES))
        lane = float(rng.uniform(0.3, 0.7))
        outside = {
            "left": [-0.25, lane],
            "right": [1.25, lane],
            "top": [lane, -0.25],
            "bottom": [lane, 1.25],
        }[edge]
        inside = [float(rng.uniform(0.35, 0.65)), float(rng.uniform(0.35, 0.65))]
        entering = bool(rng.integers(0, 2))
        start = outside if entering else inside
        end = inside if entering else outside
        spec.update(
            edge=edge,
            entering=entering,
            start=[float(start[0]), float(start[1])],
            delta=[
                (float(end[0]) - float(start[0])) * amplitude,
                (float(end[1]) - float(start[1])) * amplitude,
            ],
        )
    return spec


def _shape_position(spec: dict, tau: float) -> tuple[float, float]:
    if spec["motion"] == "circular":
        theta = spec["theta0"] + spec["sweep"] * tau
        return (
            spec["center"][0] + spec["orbit"] * np.cos(theta),
            spec["center"][1] + spec["orbit"] * np.sin(theta),
        )
    return (
        spec["start"][0] + spec["delta"][0] * tau,
        spec["start"][1] + spec["delta"][1] * tau,
    )


def _coverage(
    spec: dict, cx: float, cy: float, xx: np.ndarray, yy: np.ndarray, scale: float
) -> np.ndarray:
    r = spec["size"] * scale
    edge = 1.0  # soft edge of ~1 px keeps rendering deterministic yet smooth
    if spec["kind"] == "circle":
        d = np.hypot(xx - cx, yy - cy) - r
    elif spec["kind"] == "square":
        d = np.maximum(np.abs(xx - cx), np.abs(yy - cy)) - r
    else:  # triangle pointing up: intersection of three half-planes
        ux, uy = xx - cx, yy - cy
        d = np.maximum.reduce(
            [
                uy - r,
                (-uy * 0.5 - ux * np.sqrt(3) / 2) - r * 0.5,
                (-uy * 0.5 + ux * np.sqrt(3) / 2) - r * 0.5,
            ]
        )
    return np.clip(0.5 - d / edge, 0.0, 1.0)


def render_video(spec_list: list[dict], bg: float, n_frames: int,
                 height: int, width: int, channels: int) -> np.ndarray:
    """Rasterize shape trajectories into [N, H, W, C] float frames."""
    yy, xx = np.meshgrid(
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64),
        indexing="ij",
    )
    scale = min(height, width)
    frames = np.empty((n_frames, height, width, channels), dtype=np.float32)
    for i in range(n_frames):
        tau = i / max(n_frames - 1, 1)
        frame = np.full((height, width, channels), bg, dtype=np.float64)
        for spec in spec_list:
            cx, cy = _shape_position(spec, tau)
            cov = _coverage(spec, cx * width, cy * height, xx, yy, scale)[..., None]
            color = np.asarray(spec["color"][:channels], dtype=np.float64)
            if channels == 1:
                color = np.asarray([np.mean(spec["color"])])
            frame = frame * (1.0 - cov) + color * cov
        frames[i] = np.clip(frame, 0.0, 1.0)
    return frames


def caption_from_shapes(shapes: list[dict]) -> str:
    """Template caption naming each shape's size, color, kind, and motion."""
    parts = []
    for spec in shapes:
        size_word = "large" if spec["size"] > 0.16 else "small"
        noun = f"a {size_word} {spec['color_name']} {spec['kind']}"
        if spec["motion"] == "linear":
            phrase = f"{noun} moves {spec['direction']}"
        elif spec["motion"] == "circular":
            turn = "clockwise" if spec["sweep"] >= 0 else "counterclockwise"
            phrase = f"{noun} circles {turn}"
        else:
            if spec["entering"]:
                phrase = f"{noun} enters from the {spec['edge']}"
            else:
                phrase = f"{noun} exits through the {spec['edge']}"
        parts.append(phrase)
    return " while ".join(parts)


def synth_video(config: SynthConfig, seed: int, index: int) -> VideoClip:
    """One deterministic synthetic video (child seed = (seed, index))."""
    rng = np_rng(seed, "video", index)
    n_frames = int(rng.integers(config.frames_min, config.frames_max + 1))
    fps = int(config.fps_choices[rng.integers(0, len(config.fps_choices))])
    n_shapes = int(rng.integers(config.shapes_min, config.shapes_max + 1))
    shapes = [_sample_shape(rng, config.motion_amplitude) for _ in range(n_shapes)]
    bg = float(rng.uniform(0.05, 0.15))
    frames = render_video(
        shapes, bg, n_frames, config.height, config.width, config.channels
    )
    caption = caption_from_shapes(shapes)
    meta = {
        "video_id": f"v{index:05d}",
        "bg": bg,
        "shapes": shapes,
        "synth_seed": seed,
    }
    return VideoClip(frames=frames, fps=fps, caption=caption, meta=meta)


def synth_generate(config: SynthConfig, seed: int) -> list[VideoClip]:
    """The whole raw corpus; deterministic per (config, seed)."""
    return [synth_video(config, seed, i) for i in range(config.num_videos)]
