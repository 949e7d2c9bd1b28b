#!/usr/bin/env python3
"""Sensitivity sweeps for the candidate-set size, ridge weight, and
neighborhood size; writes a CSV and prints the no-train / final accuracies.
"""

import argparse
import csv
import tempfile
from pathlib import Path

import numpy as np

from laic import embio
from laic.centers import TrainConfig
from laic.pipeline import PipelineConfig, run_pipeline
from laic.synth import make_synthetic

SWEEPS = {
    "theta": [1, 2, 4, 8, 16],
    "gamma": [0.1, 1.0, 5.0, 25.0, 125.0],
    "k_hat": [1, 5, 10, 20, 50],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--param", choices=sorted(SWEEPS), default="gamma")
    ap.add_argument("--csv", default="sweep.csv")
    args = ap.parse_args()

    root = Path(tempfile.mkdtemp(prefix="laic_sweep_"))
    datasets = []
    for seed in range(args.seeds):
        data = root / f"data{seed}"
        data.mkdir(parents=True)
        x, w, truth, views = make_synthetic(
            k=5, n_per=200, d=32, noun_per_class=4, noise=0.3, seed=seed
        )
        embio.write_embedding(x, data / "x.emb")
        embio.write_vocab(w, data / "w.emb")
        embio.write_labels(truth, data / "truth.lab")
        embio.write_views(views, data / "views")
        datasets.append(data)

    rows = []
    for value in SWEEPS[args.param]:
        accs = []
        for seed, data in enumerate(datasets):
            kw = {args.param: value}
            cfg = PipelineConfig(
                x_path=str(data / "x.emb"), w_path=str(data / "w.emb"),
                views_dir=str(data / "views"), truth_path=str(data / "truth.lab"),
                out_dir=str(root / f"run_{args.param}{value}_{seed}"),
                k=5, small_classes=True, seed=seed, train=TrainConfig(), **kw,
            )
            cp = run_pipeline(cfg)["checkpoints"]
            accs.append([cp["kmeans_on_c"]["acc"], cp["final"]["acc"]])
        mean = np.array(accs).mean(axis=0)
        rows.append({args.param: value, "no_train_acc": mean[0], "final_acc": mean[1]})
        print(f"{args.param}={value}: no-train {mean[0]:.4f}  final {mean[1]:.4f}")

    with open(args.csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
