"""Full-scale validation of the reference experiment target.

Runs exactly what the slow acceptance test runs: build data and testset,
bench an untrained baseline, train the reference config, bench the result,
and report the smoothed-loss ratio and unclamped endpoint-PSNR gain.
"""

import json
import sys
import time
from pathlib import Path

from semfi.bench import BenchConfig
from semfi.data import DataPipelineConfig, run_all
from semfi.harness import (
    ExperimentConfig,
    build_components,
    cmd_bench,
    cmd_train,
    smoothed_losses,
)
from semfi.model import save_model_checkpoint

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/semfi_reference")
CONFIG = Path(__file__).resolve().parent.parent / "configs" / "reference.json"

cfg = ExperimentConfig.load(CONFIG)
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

fidelity_bench = BenchConfig.from_dict(
    {**cfg.bench.to_dict(),
     "metrics": ["frame_psnr", "frame_ssim", "frame_perceptual"]}
)
comps = build_components(cfg, cfg.train.seed)
save_model_checkpoint(OUT / "untrained.ckpt", comps.model, comps.mol)
rep0 = cmd_bench(OUT / "untrained.ckpt", test_dir / "manifest.jsonl",
                 fidelity_bench, OUT / "bench_untrained",
                 deterministic=False, threads=cfg.train.threads)
print(f"untrained bench done {time.time()-t0:.0f}s "
      f"psnr={rep0.all_value('frame_psnr'):.2f}", flush=True)

out = cmd_train(cfg, data_dir, OUT / "run")
print(f"train done {time.time()-t0:.0f}s", flush=True)
rep1 = cmd_bench(out["checkpoint"], test_dir / "manifest.jsonl",
                 fidelity_bench, OUT / "bench_trained",
                 deterministic=False, threads=cfg.train.threads)
sm = smoothed_losses(out["loss_log"], window=cfg.train.log_window)
print(json.dumps({
    "elapsed_s": round(time.time() - t0, 1),
    "loss_smoothed_initial": sm[0],
    "loss_smoothed_final": sm[-1],
    "loss_ratio": sm[-1] / sm[0],
    "psnr_untrained": rep0.all_value("frame_psnr"),
    "psnr_trained": rep1.all_value("frame_psnr"),
    "psnr_gain": rep1.all_value("frame_psnr") - rep0.all_value("frame_psnr"),
}, indent=2), flush=True)
