"""Desk-scale end-to-end experiment on a synthetic farm, driven through the CLI.

Runs synth -> prepare -> five-fold AGCRN -> holdout MTGNN -> two-stage
ensemble and prints each model's score next to the persistence baseline.

    python3 scripts/smoke_experiment.py --out runs/smoke
"""

import argparse
import sys
import time
from pathlib import Path

from windstgnn import storage
from windstgnn.cli import main as windstgnn, resolve_segment
from windstgnn.data import load_prepared
from windstgnn.evaluation import evaluate_over_segment, persistence_predictor
from windstgnn.model import ModelCheckpoint

CONFIG = """\
history = 36
horizon = 72
agcrn.hidden = 16
agcrn.embed_dim = 3
mtgnn.blocks = 2
mtgnn.hidden = 8
mtgnn.skip_dim = 16
train.epochs = {epochs}
train.train_stride = 3
"""


def cli(*argv):
    if windstgnn([str(a) for a in argv]) != 0:
        sys.exit(f"step failed: {' '.join(map(str, argv))}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/smoke")
    p.add_argument("--turbines", type=int, default=8)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args(argv)

    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "smoke.cfg"
    cfg.write_text(CONFIG.format(epochs=args.epochs))
    raw, prep, models, preds = root / "raw", root / "prep", root / "models", root / "preds"
    start = time.perf_counter()

    cli("synth", "--turbines", args.turbines, "--days", args.days, "--seed", 7, "--out", raw, "--force")
    cli("prepare", "--data", raw / "data.csv", "--location", raw / "loc.csv", "--out", prep, "--force")
    cli("cross-validate", "--prepared", prep, "--config", cfg, "--seed", args.seed, "--jobs", args.jobs,
        "--out", models, "--force")
    cli("train", "--prepared", prep, "--model", "mtgnn", "--config", cfg, "--seed", args.seed, "--out", models, "--force")

    ds = load_prepared(prep)
    mt = ModelCheckpoint.load(models / "mtgnn_holdout.ckpt")
    history, horizon = mt.config.history, mt.config.horizon
    spec = models / "ensemble.txt"
    spec.write_text((models / "members.txt").read_text()
                    + f"member=mtgnn_holdout.ckpt loss={mt.best_val_loss!r}\nstage2=0.4,0.6\n")

    runs = [(f"agcrn_fold{k}", f"fold{k}") for k in range(5)] + [(f"agcrn_fold{k}", "val") for k in range(5)]
    runs.append(("mtgnn_holdout", "val"))
    for name, segment in runs:
        cli("predict", "--checkpoint", models / f"{name}.ckpt", "--prepared", prep, "--segment", segment,
            "--out", preds / f"{name}_{segment}.pred", "--force")
    cli("ensemble", "--config", spec, "--prepared", prep, "--segment", "val", "--jobs", args.jobs,
        "--out", preds / "ensemble_val.pred", "--force")
    runs.append(("ensemble", "val"))
    elapsed = time.perf_counter() - start

    print(f"\n{'member':<16}{'segment':<9}{'score':>10}{'persistence':>13}{'ratio':>8}")
    for name, segment in runs:
        seg = resolve_segment(segment, ds.n_days)
        _, arrays = storage.read_container(preds / f"{name}_{segment}.pred")
        score = evaluate_over_segment(arrays["predictions"], ds, seg, horizon, history, horizon).farm
        base = evaluate_over_segment(persistence_predictor(history, horizon), ds, seg, horizon, history, horizon).farm
        print(f"{name:<16}{segment:<9}{score:>10.1f}{base:>13.1f}{score / base:>8.2f}")
    for name, _ in runs[:5] + [runs[-2]]:
        curve = [float(r.split(",")[2]) for r in (models / f"{name}.log.csv").read_text().splitlines()[1:]]
        print(f"{name}: val epoch1 {curve[1]:.4f} -> last {curve[-1]:.4f} ({curve[-1] / curve[1]:.2f}x)")
    print(f"elapsed {elapsed:.0f}s")


if __name__ == "__main__":
    main()
