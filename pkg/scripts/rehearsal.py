"""Reduced-scale rehearsal of the reference experiment.

Checks learning dynamics before freezing the acceptance config: smoothed
loss ratio and the unclamped endpoint-PSNR gain of trained vs untrained.
"""

import json
import sys
import time
from pathlib import Path

from semfi.bench import BenchConfig
from semfi.data import DataPipelineConfig, SynthConfig, run_all
from semfi.harness import ExperimentConfig, cmd_bench, cmd_train, smoothed_losses
from semfi.model import save_model_checkpoint
from semfi.harness import build_components

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/semfi_rehearsal")
STEPS = int(sys.argv[2]) if len(sys.argv) > 2 else 600
BASE = int(sys.argv[3]) if len(sys.argv) > 3 else 350

cfg = ExperimentConfig.from_dict({
    "schema_version": 1,
    "model": {"height": 32, "width": 32, "channels": 3, "embed_dim": 64,
              "num_layers": 3, "num_heads": 4, "d_text": 64,
              "noise_steps": 200, "schedule_kind": "linear"},
    "mol": {"rank": 16, "frame_counts": [5, 9, 17, 33, 65, 81],
            "enabled": True, "multi_frame_training": True},
    "data": {"synth": {"num_videos": 30, "height": 32, "width": 32,
                       "channels": 3, "frames_min": 81, "frames_max": 324},
             "f_max": 81, "scales": [5, 9, 17, 33, 65, 81],
             "low_pct": 5, "high_pct": 95},
    "train": {"mode": "pretrain", "steps": STEPS, "base_steps": BASE,
              "batch_size": 8, "lr": 1e-3, "endpoint_loss_weight": 5.0,
              "seed": 0, "deterministic": False, "threads": 4},
    "bench": {"scales": [5, 9, 17, 33, 65, 81], "sample_steps": 15,
              "metrics": ["frame_psnr", "frame_ssim", "frame_perceptual"],
              "probe_train_videos": 30},
    "eval_videos": 10,
})

t0 = time.time()
data_dir = OUT / "data"
test_dir = OUT / "testset"
run_all(data_dir, cfg.data, seed=100)
test_cfg = DataPipelineConfig.from_dict(cfg.data.to_dict())
test_cfg.synth.num_videos = cfg.eval_videos
test_cfg.threshold_mode = "absolute"
test_cfg.absolute_thresholds = {"clip_low": -2.0, "clip_high": 2.0,
                                "flow_low": -1.0, "flow_high": 1e9}
run_all(test_dir, test_cfg, seed=200)
print(f"data done {time.time()-t0:.0f}s", flush=True)

# untrained baseline checkpoint: components at init, zero training steps
comps = build_components(cfg, cfg.train.seed)
base_ckpt = OUT / "untrained.ckpt"
save_model_checkpoint(base_ckpt, comps.model, comps.mol)
rep0 = cmd_bench(base_ckpt, test_dir / "manifest.jsonl", cfg.bench,
                 OUT / "bench_untrained", deterministic=False, threads=4)
print(f"untrained bench done {time.time()-t0:.0f}s "
      f"psnr={rep0.all_value('frame_psnr'):.2f}", flush=True)

out = cmd_train(cfg, data_dir, OUT / "run")
print(f"train done {time.time()-t0:.0f}s", flush=True)
rep1 = cmd_bench(out["checkpoint"], test_dir / "manifest.jsonl", cfg.bench,
                 OUT / "bench_trained", deterministic=False, threads=4)
sm = smoothed_losses(out["loss_log"], window=100)
print(json.dumps({
    "elapsed_s": round(time.time() - t0, 1),
    "loss_smoothed_initial": sm[0],
    "loss_smoothed_final": sm[-1],
    "loss_ratio": sm[-1] / sm[0],
    "psnr_untrained": rep0.all_value("frame_psnr"),
    "psnr_trained": rep1.all_value("frame_psnr"),
    "psnr_gain": rep1.all_value("frame_psnr") - rep0.all_value("frame_psnr"),
}, indent=2), flush=True)
