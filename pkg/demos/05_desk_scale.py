"""Desk-scale training: GGM initialization against random initialization.

Uses demos/desk_scale.json: n=50 weighted l2 templates on 6x6x3 patches,
2x2 offset regions, mean pooling, 30 epochs of momentum SGD. Runs on
CIFAR-10 when a directory is given, otherwise on the synthetic image set.
The same steps are available one by one through the CLI (see README).

Run: python3 demos/05_desk_scale.py [CIFAR_DIR] [--epochs N]
"""

import argparse
import json
import time
from pathlib import Path

from simnets import pipeline

ap = argparse.ArgumentParser()
ap.add_argument("cifar", nargs="?")
ap.add_argument("--epochs", type=int, default=None)
args = ap.parse_args()

overrides = []
if args.cifar:
    overrides += ['data.source="cifar10"', f"data.dir={json.dumps(args.cifar)}"]
if args.epochs:
    overrides.append(f"train.epochs={args.epochs}")
cfg = pipeline.load_config(Path(__file__).with_name("desk_scale.json"), overrides)
prepared = pipeline.prepare(cfg)
print(f"data: {len(prepared.train)} train, {len(prepared.test)} test ({cfg['data']['source']})")

for method in ("ggm", "random"):
    cfg["init"]["method"] = method
    t0 = time.perf_counter()
    net = pipeline.init_model(cfg, prepared)
    pipeline.train_model(net, prepared, cfg, log=lambda r, m=method: print(
        f"  {m:>6} epoch {r.epoch:2d}: loss {r.loss:.3f}  train {r.train_acc:.3f}  test {r.val_acc:.3f}"))
    report = pipeline.evaluate_model(net, prepared.test)
    print(f"{method}: test accuracy {report.accuracy:.3f} in {(time.perf_counter() - t0) / 60:.1f} min")
