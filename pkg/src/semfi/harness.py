"""Experiment harness: configuration plus the train / sample / bench /
ablate commands the CLI wraps.

A single JSON ExperimentConfig (versioned schema) drives everything; all
artifacts under an output directory derive from (config, seed). Training
groups batches by frame count so exactly one expert is routed per step;
pretrain mode trains the base on first-frame conditioning, freezes it, and
trains only the adapter stack on dual-endpoint conditioning, while scratch
mode trains everything jointly for the ablation harness.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import torch

from .bench import (
    BenchConfig,
    BenchReport,
    GroundTruthSource,
    bench_run,
    cross_scale_variance,
    write_charts,
    write_csv,
    write_markdown,
    write_per_clip_csv,
)
from .conditioning import RandomProjectionImageEncoder
from .data import (
    DataPipelineConfig,
    read_clip,
    run_all,
    validate_manifest,
    write_clip,
)
from .errors import ConfigurationError, DataError
from .model import (
    Denoiser,
    DenoiserConfig,
    NoiseSchedule,
    PixelCodec,
    TextEncoder,
    load_model_checkpoint,
    sample,
    save_model_checkpoint,
)
from .model.training import make_train_state, training_step
from .mol import DEFAULT_FRAME_COUNTS, create_mol_state
from .rng import child_seed, np_rng
from .types import VideoClip

SCHEMA_VERSION = 1
TEXT_ENCODER_SEED = 101
IMAGE_ENCODER_SEED = 202
ABLATION_ROWS = ("w/o Multi-frame", "w/o MoL", "Full Model")
ABLATION_COLUMNS = (
    "video_perceptual",
    "video_frechet",
    "semantic_similarity",
    "temporal_flickering",
    "motion_smoothness",
    "dynamic_degree",
    "aesthetic_quality",
    "imaging_quality",
)
SINGLE_SCALE_TRAINING = 65  # the "w/o Multi-frame" ablation trains here only


@dataclass
class MolConfig:
    rank: int = 16
    alpha: float | None = None
    frame_counts: tuple[int, ...] = DEFAULT_FRAME_COUNTS
    enabled: bool = True
    multi_frame_training: bool = True

    def __post_init__(self) -> None:
        self.frame_counts = tuple(int(s) for s in self.frame_counts)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "alpha": self.alpha,
            "frame_counts": list(self.frame_counts),
            "enabled": self.enabled,
            "multi_frame_training": self.multi_frame_training,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MolConfig":
        d = dict(d)
        if "frame_counts" in d:
            d["frame_counts"] = tuple(d["frame_counts"])
        return cls(**d)


@dataclass
class TrainConfig:
    mode: str = "pretrain"
    steps: int = 2000
    base_steps: int = 1200
    batch_size: int = 8
    lr: float = 1e-4
    endpoint_loss_weight: float = 1.0
    seed: int = 0
    deterministic: bool = True
    threads: int = 4
    log_window: int = 100

    def __post_init__(self) -> None:
        if self.mode not in ("pretrain", "scratch"):
            raise ConfigurationError(f"train.mode must be pretrain|scratch, got {self.mode!r}")
        if not (0 <= self.base_steps <= self.steps):
            raise ConfigurationError(
                f"base_steps {self.base_steps} must lie in [0, steps={self.steps}]"
            )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "steps": self.steps,
            "base_steps": self.base_steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "endpoint_loss_weight": self.endpoint_loss_weight,
            "seed": self.seed,
            "deterministic": self.deterministic,
            "threads": self.threads,
            "log_window": self.log_window,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class ExperimentConfig:
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    mol: MolConfig = field(default_factory=MolConfig)
    data: DataPipelineConfig = field(default_factory=DataPipelineConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    eval_videos: int = 20
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "model": self.model.to_dict(),
            "mol": self.mol.to_dict(),
            "data": self.data.to_dict(),
            "train": self.train.to_dict(),
            "bench": self.bench.to_dict(),
            "eval_videos": self.eval_videos,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"unsupported config schema_version {version!r}; "
                f"this build reads version {SCHEMA_VERSION}"
            )
        return cls(
            model=DenoiserConfig.from_dict(d.get("model", {})),
            mol=MolConfig.from_dict(d.get("mol", {})),
            data=DataPipelineConfig.from_dict(d.get("data", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            bench=BenchConfig.from_dict(d.get("bench", {})),
            eval_videos=d.get("eval_videos", 20),
            schema_version=SCHEMA_VERSION,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(d)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_record(
    out_dir: str | Path,
    command: str,
    config: dict,
    seed: int,
    inputs: dict[str, str | Path] | None = None,
    outputs: dict[str, str | Path] | None = None,
) -> Path:
    record = {
        "command": command,
        "config_hash": hashlib.sha256(
            canonical_json(config).encode("utf-8")
        ).hexdigest(),
        "seed": seed,
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in (inputs or {}).items()
        },
        "outputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in (outputs or {}).items()
        },
    }
    path = Path(out_dir) / f"run_record_{command}.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, sort_keys=True, indent=2)
        f.write("\n")
    return path


def _apply_thread_policy(cfg: TrainConfig) -> None:
    torch.set_num_threads(1 if cfg.deterministic else max(1, cfg.threads))


def build_components(cfg: ExperimentConfig, seed: int):
    model = Denoiser(cfg.model, seed=child_seed(seed, "model-init"))
    schedule = NoiseSchedule(
        cfg.model.noise_steps,
        cfg.model.schedule_kind,
        cfg.model.beta_min,
        cfg.model.beta_max,
    )
    codec = PixelCodec(cfg.model.latent_pool)
    text_encoder = TextEncoder(d_text=cfg.model.d_text, seed=TEXT_ENCODER_SEED)
    image_encoder = RandomProjectionImageEncoder(
        d_out=cfg.model.d_text, seed=IMAGE_ENCODER_SEED
    )
    mol = create_mol_state(
        model.covered_layer_shapes(),
        rank=cfg.mol.rank,
        seed=child_seed(seed, "mol-init"),
        frame_counts=cfg.mol.frame_counts,
        alpha=cfg.mol.alpha,
        enable_experts=cfg.mol.enabled,
    )
    return SimpleNamespace(
        model=model,
        schedule=schedule,
        codec=codec,
        text_encoder=text_encoder,
        image_encoder=image_encoder,
        mol=mol,
    )


class ClipCache:
    """Lazy per-path clip loader; the cut corpus fits desk-scale memory."""

    def __init__(self, base: Path):
        self.base = base
        self._clips: dict[str, VideoClip] = {}

    def get(self, rel_path: str) -> VideoClip:
        if rel_path not in self._clips:
            self._clips[rel_path] = read_clip(self.base / rel_path)
        return self._clips[rel_path]


def _training_scales(cfg: ExperimentConfig, manifest_scales: set[int]) -> list[int]:
    if cfg.mol.multi_frame_training:
        required = set(cfg.mol.frame_counts)
        missing = sorted(required - manifest_scales)
        if missing:
            raise DataError(
                f"manifest missing scales {missing} required by the "
                "multi-frame training config"
            )
        return sorted(required)
    if SINGLE_SCALE_TRAINING not in manifest_scales:
        raise DataError(
            f"single-scale training needs scale {SINGLE_SCALE_TRAINING} "
            "in the manifest"
        )
    return [SINGLE_SCALE_TRAINING]


def cmd_train(
    cfg: ExperimentConfig, data_dir: str | Path, out_dir: str | Path
) -> dict[str, Path]:
    _apply_thread_policy(cfg.train)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.jsonl"
    records = validate_manifest(manifest_path)
    scales = _training_scales(cfg, {r["scale_s"] for r in records})
    by_scale: dict[int, list[dict]] = {s: [] for s in scales}
    for r in records:
        if r["scale_s"] in by_scale:
            by_scale[r["scale_s"]].append(r)
    empty = [s for s, recs in by_scale.items() if not recs]
    if empty:
        raise DataError(f"no training clips at scales {empty}")

    comps = build_components(cfg, cfg.train.seed)
    cache = ClipCache(data_dir)
    text_cache: dict[str, object] = {}

    def embed_text(caption: str):
        if caption not in text_cache:
            text_cache[caption] = comps.text_encoder.encode(caption)
        return text_cache[caption]

    if cfg.train.mode == "pretrain":
        stages = [
            ("base", cfg.train.base_steps, dict(train_base=True,
                                                adapters_active=False,
                                                dual_endpoint=False)),
            ("adapters", cfg.train.steps - cfg.train.base_steps,
             dict(train_base=False, adapters_active=True, dual_endpoint=True)),
        ]
    else:
        stages = [
            ("joint", cfg.train.steps,
             dict(train_base=True, adapters_active=True, dual_endpoint=True)),
        ]

    state = make_train_state(
        comps.model, comps.schedule, comps.codec, comps.mol,
        comps.image_encoder, lr=cfg.train.lr,
        endpoint_loss_weight=cfg.train.endpoint_loss_weight,
    )
    counts = np.array([len(by_scale[s]) for s in scales], dtype=np.float64)
    probs = counts / counts.sum()
    log_path = out / "loss_log.jsonl"
    global_step = 0
    with open(log_path, "w", encoding="utf-8") as log:
        for stage_name, stage_steps, flags in stages:
            if stage_steps <= 0:
                continue
            state.dual_endpoint = flags["dual_endpoint"]
            state.set_stage(flags["train_base"], flags["adapters_active"],
                            cfg.train.lr)
            for step in range(stage_steps):
                rng = np_rng(cfg.train.seed, "batch", stage_name, step)
                s = int(scales[rng.choice(len(scales), p=probs)])
                recs = by_scale[s]
                idx = rng.integers(0, len(recs), size=cfg.train.batch_size)
                batch = [
                    (cache.get(recs[i]["path"]), embed_text(recs[i]["caption"]))
                    for i in idx
                ]
                loss = training_step(
                    state, batch, child_seed(cfg.train.seed, stage_name, step)
                )
                log.write(
                    canonical_json(
                        {
                            "step": global_step,
                            "stage": stage_name,
                            "scale": s,
                            "loss": loss,
                        }
                    )
                    + "\n"
                )
                if global_step % 100 == 0:
                    print(f"[train] step {global_step} stage {stage_name} "
                          f"scale {s} loss {loss:.4f}", flush=True)
                global_step += 1

    ckpt_path = out / "checkpoint.ckpt"
    save_model_checkpoint(
        ckpt_path,
        comps.model,
        comps.mol,
        extra_config={
            "text_encoder": comps.text_encoder.config(),
            "image_encoder": {
                "d_out": cfg.model.d_text,
                "seed": IMAGE_ENCODER_SEED,
            },
            "experiment": cfg.to_dict(),
        },
    )
    write_run_record(
        out, "train", cfg.to_dict(), cfg.train.seed,
        inputs={"manifest": manifest_path},
        outputs={"checkpoint": ckpt_path, "loss_log": log_path},
    )
    return {"checkpoint": ckpt_path, "loss_log": log_path}


def load_bundle(ckpt_path: str | Path) -> SimpleNamespace:
    model, mol, config = load_model_checkpoint(ckpt_path)
    dn = model.cfg
    schedule = NoiseSchedule(
        dn.noise_steps, dn.schedule_kind, dn.beta_min, dn.beta_max
    )
    text_cfg = config.get("text_encoder") or {
        "d_text": dn.d_text,
        "n_tokens": 8,
        "vocab_buckets": 4096,
        "seed": TEXT_ENCODER_SEED,
    }
    img_cfg = config.get("image_encoder") or {
        "d_out": dn.d_text,
        "seed": IMAGE_ENCODER_SEED,
    }
    return SimpleNamespace(
        model=model,
        mol=mol,
        schedule=schedule,
        codec=PixelCodec(dn.latent_pool),
        text_encoder=TextEncoder(**text_cfg),
        image_encoder=RandomProjectionImageEncoder(**img_cfg),
        config=config,
    )


def load_endpoint_frame(spec: str | Path) -> np.ndarray:
    """Read one frame: 'file.npy', 'file.clip' (frame 0), or 'file.clip[k]'."""
    spec = str(spec)
    index = 0
    if spec.endswith("]") and "[" in spec:
        spec, _, tail = spec.rpartition("[")
        index = int(tail[:-1])
    path = Path(spec)
    if not path.is_file():
        raise DataError(f"endpoint frame file not found: {path}")
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.ndim == 2:
            arr = arr[..., None]
        if arr.ndim != 3:
            raise DataError(f"{path}: expected [H,W,C] frame, got {arr.shape}")
        return np.clip(arr.astype(np.float32), 0.0, 1.0)
    clip = read_clip(path)
    return clip.frames[index]


def cmd_sample(
    ckpt_path: str | Path,
    first: str | Path,
    last: str | Path,
    text: str,
    frames: int,
    steps: int,
    seed: int,
    out_path: str | Path,
    clamp: bool = True,
    fps: int = 8,
) -> Path:
    bundle = load_bundle(ckpt_path)
    I_f = load_endpoint_frame(first)
    I_l = load_endpoint_frame(last)
    clip = sample(
        bundle.model,
        bundle.schedule,
        bundle.codec,
        bundle.text_encoder,
        bundle.image_encoder,
        I_f,
        I_l,
        text,
        frames,
        steps,
        seed,
        mol=bundle.mol,
        clamp_endpoints=clamp,
        fps=fps,
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_clip(out_path, clip, dtype="<f4")
    return out_path


class ModelSource:
    """Sample source backed by a trained checkpoint bundle."""

    def __init__(self, bundle: SimpleNamespace, bench_cfg: BenchConfig):
        self.bundle = bundle
        self.cfg = bench_cfg
        self.name = "model"

    def generate(self, record: dict, gt: VideoClip, clamp: bool) -> VideoClip:
        return sample(
            self.bundle.model,
            self.bundle.schedule,
            self.bundle.codec,
            self.bundle.text_encoder,
            self.bundle.image_encoder,
            gt.first_frame(),
            gt.last_frame(),
            record["caption"],
            record["N"],
            self.cfg.sample_steps,
            child_seed(self.cfg.sample_seed, "bench", record["clip_id"]),
            mol=self.bundle.mol,
            clamp_endpoints=clamp,
            eta=self.cfg.sample_eta,
            fps=record["fps"],
        )


def cmd_bench(
    ckpt_path: str | Path | None,
    testset_manifest: str | Path,
    bench_cfg: BenchConfig,
    out_dir: str | Path,
    source: str = "model",
    charts: bool = False,
    deterministic: bool = True,
    threads: int = 4,
) -> BenchReport:
    torch.set_num_threads(1 if deterministic else max(1, threads))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if source == "gt":
        src = GroundTruthSource()
    elif source == "model":
        if ckpt_path is None:
            raise ConfigurationError("model source needs a checkpoint path")
        src = ModelSource(load_bundle(ckpt_path), bench_cfg)
    else:
        raise ConfigurationError(f"unknown bench source {source!r}")
    report = bench_run(src, testset_manifest, bench_cfg)
    report.save_json(out / "report.json")
    write_csv(report, out / "report.csv")
    write_markdown(report, out / "report.md")
    write_per_clip_csv(report, out / "per_clip.csv")
    if charts:
        write_charts(report, out / "charts")
    inputs = {"testset": Path(testset_manifest)}
    if ckpt_path is not None and source == "model":
        inputs["checkpoint"] = Path(ckpt_path)
    write_run_record(
        out, "bench", bench_cfg.to_dict(), bench_cfg.sample_seed,
        inputs=inputs,
        outputs={
            "report_json": out / "report.json",
            "report_csv": out / "report.csv",
        },
    )
    return report


def _variant_configs(cfg: ExperimentConfig) -> dict[str, ExperimentConfig]:
    full = ExperimentConfig.from_dict(cfg.to_dict())
    no_mol = ExperimentConfig.from_dict(cfg.to_dict())
    no_mol.mol.enabled = False
    no_multi = ExperimentConfig.from_dict(cfg.to_dict())
    no_multi.mol.multi_frame_training = False
    return {
        "w/o Multi-frame": no_multi,
        "w/o MoL": no_mol,
        "Full Model": full,
    }


def _fmt_cell(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, str):
        return v
    return f"{v:.6f}"


def cmd_ablate(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Train and bench {w/o Multi-frame, w/o MoL, Full Model} on shared data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    test_dir = out / "testset"
    run_all(data_dir, cfg.data, child_seed(cfg.train.seed, "data"))

    test_cfg = DataPipelineConfig.from_dict(cfg.data.to_dict())
    test_cfg.synth.num_videos = cfg.eval_videos
    test_cfg.threshold_mode = "absolute"
    test_cfg.absolute_thresholds = {
        "clip_low": -2.0,
        "clip_high": 2.0,
        "flow_low": -1.0,
        "flow_high": 1e9,
    }
    run_all(test_dir, test_cfg, child_seed(cfg.train.seed, "testset"))

    manifest_hash = sha256_file(data_dir / "manifest.jsonl")
    variants = _variant_configs(cfg)
    rows: dict[str, dict] = {}
    variance_rows: dict[str, dict] = {}
    safe_names = {
        "w/o Multi-frame": "no_multiframe",
        "w/o MoL": "no_mol",
        "Full Model": "full",
    }
    for label in ABLATION_ROWS:
        vcfg = variants[label]
        vdir = out / safe_names[label]
        vdir.mkdir(exist_ok=True)
        vcfg.save(vdir / "config.json")
        try:
            train_out = cmd_train(vcfg, data_dir, vdir)
            report = cmd_bench(
                train_out["checkpoint"],
                test_dir / "manifest.jsonl",
                vcfg.bench,
                vdir / "bench",
                deterministic=vcfg.train.deterministic,
                threads=vcfg.train.threads,
            )
            rows[label] = {
                col: report.all_value(col) if col in report.metrics else None
                for col in ABLATION_COLUMNS
            }
            variance_rows[label] = {
                name: val for name, val in cross_scale_variance(report).items()
            }
        except Exception as e:  # noqa: BLE001 - partial report on failure
            rows[label] = {col: f"FAILED: {e}" for col in ABLATION_COLUMNS}
            variance_rows[label] = {}

    table = {
        "rows": ABLATION_ROWS,
        "columns": ABLATION_COLUMNS,
        "values": rows,
        "variance": variance_rows,
        "data_manifest_sha256": manifest_hash,
        "config_diffs": _config_diffs(variants),
    }
    with open(out / "ablation.json", "w", encoding="utf-8") as f:
        json.dump(table, f, sort_keys=True, indent=2)
        f.write("\n")
    _write_ablation_tables(table, out)
    write_run_record(
        out, "ablate", cfg.to_dict(), cfg.train.seed,
        inputs={"data_manifest": data_dir / "manifest.jsonl"},
        outputs={"ablation": out / "ablation.json"},
    )
    return table


def _config_diffs(variants: dict[str, ExperimentConfig]) -> dict[str, list[str]]:
    def flatten(d: dict, prefix: str = "") -> dict[str, object]:
        out: dict[str, object] = {}
        for k, v in d.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                out.update(flatten(v, key + "."))
            else:
                out[key] = canonical_json(v)
        return out

    base = flatten(variants["Full Model"].to_dict())
    diffs = {}
    for label, vcfg in variants.items():
        flat = flatten(vcfg.to_dict())
        diffs[label] = sorted(
            k for k in set(base) | set(flat) if base.get(k) != flat.get(k)
        )
    return diffs


def _write_ablation_tables(table: dict, out: Path) -> None:
    cols = list(table["columns"])
    lines_csv = [",".join(["setting"] + cols)]
    md = ["# Ablation", "", "| Setting | " + " | ".join(cols) + " |"]
    md.append("|" + "---|" * (len(cols) + 1))
    for label in table["rows"]:
        vals = [_fmt_cell(table["values"][label].get(c)) for c in cols]
        lines_csv.append(",".join([f'"{label}"'] + vals))
        md.append("| " + " | ".join([label] + vals) + " |")
    md += ["", "## Cross-scale log10 variance", ""]
    var_metrics = sorted(
        {m for row in table["variance"].values() for m in row}
    )
    md.append("| Setting | " + " | ".join(var_metrics) + " |")
    md.append("|" + "---|" * (len(var_metrics) + 1))
    for label in table["rows"]:
        vals = [_fmt_cell(table["variance"][label].get(m)) for m in var_metrics]
        md.append("| " + " | ".join([label] + vals) + " |")
    (out / "ablation.csv").write_text("\n".join(lines_csv) + "\n", encoding="utf-8")
    (out / "ablation.md").write_text("\n".join(md) + "\n", encoding="utf-8")


def cmd_report(report_json: str | Path, out_dir: str | Path,
               charts: bool = False) -> None:
    report = BenchReport.load_json(report_json)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(report, out / "report.csv")
    write_markdown(report, out / "report.md")
    write_per_clip_csv(report, out / "per_clip.csv")
    if charts:
        write_charts(report, out / "charts")


def smoothed_losses(log_path: str | Path, window: int) -> np.ndarray:
    """Moving average of the loss column of a loss log."""
    losses = [
        json.loads(line)["loss"]
        for line in Path(log_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if len(losses) < window:
        window = max(1, len(losses))
    kernel = np.ones(window) / window
    return np.convolve(np.asarray(losses, dtype=np.float64), kernel, mode="valid")
