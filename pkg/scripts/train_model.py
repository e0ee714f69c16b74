"""Build a labelled dataset on a narrow-passage family and train the regressor.

    python scripts/train_model.py --envs 110 --out-dir runs/model
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from critprm.centrality import CentralityConfig, build_dataset
from critprm.env import generate_narrow_passage
from critprm.learner import TrainConfig, train
from critprm.roadmap import RoadmapConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--walls", type=int, default=3)
    p.add_argument("--gaps", type=int, default=1)
    p.add_argument("--gap-width", type=float, default=0.03)
    p.add_argument("--envs", type=int, default=110)
    p.add_argument("--first-seed", type=int, default=1000)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--hidden", default="128,64")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="runs/model")
    a = p.parse_args()

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    envs = [generate_narrow_passage(a.dim, a.walls, a.gaps, a.gap_width, a.first_seed + i) for i in range(a.envs)]

    t0 = time.perf_counter()
    ds = build_dataset(envs, RoadmapConfig(a.n), CentralityConfig(m=a.m), None, np.random.default_rng(a.seed), workers=a.workers)
    ds.save(out / "dataset.jsonl")
    print(f"dataset: {len(ds)} rows from {a.envs} envs in {time.perf_counter() - t0:.1f}s")

    arch = [envs[0].patch_size, *(int(h) for h in a.hidden.split(",")), 1]
    t0 = time.perf_counter()
    model, report = train(ds, TrainConfig(epochs=a.epochs, seed=a.seed), arch)
    model.save(out / "model.json")
    print(f"trained {arch} in {time.perf_counter() - t0:.1f}s")
    for epoch, (tr, va) in enumerate(zip(report.train_loss, report.val_loss)):
        print(f"  epoch {epoch:3d}  train {tr:8.3f}  val {va:8.3f}")
    print(f"constant-predictor validation loss {report.baseline_val_loss:.3f}")
    (out / "train_report.json").write_text(
        json.dumps(
            {
                "args": vars(a),
                "arch": arch,
                "rows": len(ds),
                "train_loss": report.train_loss,
                "val_loss": report.val_loss,
                "baseline_val_loss": report.baseline_val_loss,
            },
            indent=2,
        )
        + "\n"
    )


if __name__ == "__main__":
    main()
