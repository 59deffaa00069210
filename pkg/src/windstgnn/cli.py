"""Command-line entry point: ``python -m windstgnn <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import storage
from .config import ConfigError, RunConfig, load_config
from .data import (
    FarmDataset,
    Segment,
    SplitError,
    days_to_segments,
    engineer_features,
    fit_normalizer,
    load_prepared,
    load_sdwpf,
    make_split,
    save_prepared,
)
from .ensemble import EnsembleError, EnsembleSpec, two_stage
from .evaluation import (
    EvaluationError,
    checkpoint_predictor,
    evaluate_over_segment,
    persistence_predictor,
    segment_origins,
)
from .graphs import AdjacencyGraph
from .model import ModelCheckpoint
from .synth import synth_generate
from .training import build_graph, cross_validate, format_log, train
from .validity import build_mask, format_mask_report

log = logging.getLogger("windstgnn")

PREDICTIONS_KIND = "predictions"


class CliError(RuntimeError):
    pass


# -- helpers -----------------------------------------------------------------

def _claim(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise CliError(f"{path} already exists (use --force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _run_config(args) -> RunConfig:
    overrides: dict[str, str] = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["train.seed"] = str(args.seed)
    if getattr(args, "stride", None) is not None and args.command in ("train", "cross-validate"):
        overrides["train.train_stride"] = str(args.stride)
    return load_config(args.config, overrides)


def resolve_segment(name: str, n_days: int) -> Segment:
    """Named slot range: ``train``/``val`` of the holdout split, ``fold<k>`` or ``all``."""
    if name == "all":
        return (0, n_days * 144)
    if name in ("train", "val"):
        split = make_split("holdout", n_days)[0]
        days = split.train if name == "train" else split.val
    elif name.startswith("fold") and name[4:].isdigit():
        days = make_split("five-fold", n_days)[int(name[4:])].val
    else:
        raise CliError(f"unknown segment {name!r} (train, val, fold0..fold4, all)")
    segs = days_to_segments(days)
    if len(segs) != 1:
        raise CliError(f"segment {name!r} is not contiguous")
    return segs[0]


def _write_predictions(path: Path, preds: np.ndarray, origins: np.ndarray, meta: dict) -> None:
    man = {"kind": PREDICTIONS_KIND, **meta, "n_origins": len(origins)}
    storage.write_container(path, man, {"predictions": preds, "origins": origins.astype(np.float64)})


def _read_predictions(path) -> tuple[dict, np.ndarray, np.ndarray]:
    man, arrays = storage.read_container(path)
    if man.get("kind") != PREDICTIONS_KIND:
        raise CliError(f"{path}: not a predictions file")
    return man, arrays["predictions"], arrays["origins"].astype(np.int64)


def _predict_checkpoint(ckpt: ModelCheckpoint, ds: FarmDataset, segment: Segment, stride: int):
    cfg = ckpt.config
    origins = segment_origins(segment, stride, cfg.history, cfg.horizon)
    return checkpoint_predictor(ckpt)(ds, origins), origins


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> None:
    out = Path(args.out)
    for name in ("data.csv", "loc.csv"):
        _claim(out / name, args.force)
    data, loc = synth_generate(args.turbines, args.days, args.seed or 0, out)
    print(f"wrote {data} and {loc}")


def cmd_prepare(args) -> None:
    out = Path(args.out)
    _claim(out / "manifest.txt", args.force)
    ds = engineer_features(load_sdwpf(args.data, args.location))
    save_prepared(ds, out)
    _, counts = build_mask(ds.raw)
    print(f"prepared {ds.n_turbines} turbines x {ds.n_days} days ({ds.n_records} records) -> {out}")
    print(format_mask_report(counts))


def cmd_mask_report(args) -> None:
    ds = load_prepared(args.prepared) if args.prepared else load_sdwpf(args.data, args.location)
    report = format_mask_report(build_mask(ds.raw)[1]) + "\n"
    if args.out:
        _claim(Path(args.out), args.force).write_text(report)
    sys.stdout.write(report)


def cmd_build_graphs(args) -> None:
    cfg = _run_config(args)
    ds = load_prepared(args.prepared)
    out = Path(args.out)
    plans = [("holdout", make_split("holdout", ds.n_days))]
    try:
        plans.append(("fold", make_split("five-fold", ds.n_days)))
    except SplitError as exc:
        log.warning("skipping per-fold semantic graphs: %s", exc)
    jobs = [(_claim(out / "geographic.txt", args.force), "mtgnn", plans[0][1][0])]
    for tag, plan in plans:
        for k, split in enumerate(plan):
            name = "semantic_holdout.txt" if tag == "holdout" else f"semantic_fold{k}.txt"
            jobs.append((_claim(out / name, args.force), "agcrn", split))
    for path, kind, split in jobs:
        normalizer = fit_normalizer(ds, split.train_segments)
        build_graph(kind, cfg, ds, normalizer, split).save(path)
        print(f"wrote {path}")


def _train_one(kind: str, cfg: RunConfig, ds: FarmDataset, fold: int, out: Path, force: bool, graph) -> ModelCheckpoint:
    tag = "holdout" if fold < 0 else f"fold{fold}"
    ckpt_path = _claim(out / f"{kind}_{tag}.ckpt", force)
    log_path = _claim(out / f"{kind}_{tag}.log.csv", force)
    split = make_split("holdout", ds.n_days)[0] if fold < 0 else make_split("five-fold", ds.n_days)[fold]
    adjacency = AdjacencyGraph.load(graph).matrix if graph else None
    ckpt, logs = train(kind, cfg, ds, split, fold=fold, adjacency=adjacency)
    ckpt.save(ckpt_path)
    log_path.write_text(format_log(logs))
    print(f"{kind} {tag}: best_val_loss={ckpt.best_val_loss!r} epoch={ckpt.epoch} -> {ckpt_path}")
    return ckpt


def cmd_train(args) -> None:
    cfg = _run_config(args)
    ds = load_prepared(args.prepared)
    out = Path(args.out)
    if args.fold in (None, "holdout"):
        folds = [-1]
    elif args.fold == "all":
        folds = list(range(5))
    else:
        folds = [int(args.fold)]
    for fold in folds:
        _train_one(args.model, cfg, ds, fold, out, args.force, args.graph)


def cmd_cross_validate(args) -> None:
    cfg = _run_config(args)
    ds = load_prepared(args.prepared)
    out = Path(args.out)
    paths = [(_claim(out / f"agcrn_fold{k}.ckpt", args.force), _claim(out / f"agcrn_fold{k}.log.csv", args.force))
             for k in range(5)]
    members_path = _claim(out / "members.txt", args.force)
    ckpts, losses, logs = cross_validate(cfg, ds, jobs=args.jobs or 1)
    lines = []
    for (ck_path, log_path), ckpt, entries in zip(paths, ckpts, logs):
        ckpt.save(ck_path)
        log_path.write_text(format_log(entries))
        lines.append(f"member={ck_path.name} loss={ckpt.best_val_loss!r}")
        print(f"fold={ckpt.fold} best_val_loss={ckpt.best_val_loss!r}")
    members_path.write_text("\n".join(lines) + "\n")
    print(f"mean_val_loss={float(np.mean(losses))!r}")


def cmd_predict(args) -> None:
    ds = load_prepared(args.prepared)
    ckpt = ModelCheckpoint.load(args.checkpoint)
    segment = resolve_segment(args.segment, ds.n_days)
    stride = args.stride or ckpt.config.horizon
    out = _claim(Path(args.out), args.force)
    preds, origins = _predict_checkpoint(ckpt, ds, segment, stride)
    _write_predictions(out, preds, origins, {
        "model": ckpt.kind, "segment": args.segment, "stride": stride,
        "history": ckpt.config.history, "horizon": ckpt.config.horizon,
    })
    print(f"wrote {len(origins)} forecasts -> {out}")


def cmd_evaluate(args) -> None:
    ds = load_prepared(args.prepared)
    segment = resolve_segment(args.segment, ds.n_days)
    if args.pred:
        man, preds, origins = _read_predictions(args.pred)
        history, horizon = int(man["history"]), int(man["horizon"])
        stride = args.stride or int(man["stride"])
        expected = segment_origins(segment, stride, history, horizon)
        if not np.array_equal(expected, origins):
            raise CliError(f"{args.pred}: forecast origins do not match segment {args.segment!r} at stride {stride}")
        report = evaluate_over_segment(preds, ds, segment, stride, history, horizon)
    elif args.checkpoint:
        ckpt = ModelCheckpoint.load(args.checkpoint)
        cfg = ckpt.config
        report = evaluate_over_segment(checkpoint_predictor(ckpt), ds, segment,
                                       args.stride or cfg.horizon, cfg.history, cfg.horizon)
    else:
        cfg = _run_config(args)
        report = evaluate_over_segment(persistence_predictor(cfg.history, cfg.horizon), ds, segment,
                                       args.stride or cfg.horizon, cfg.history, cfg.horizon)
    text = report.to_csv(ds.turbine_ids)
    if args.out:
        _claim(Path(args.out), args.force).write_text(text)
    sys.stdout.write(text)


def cmd_ensemble(args) -> None:
    if not args.config:
        raise CliError("ensemble needs --config <ensemble spec file>")
    spec = EnsembleSpec.load(args.config)
    ds = load_prepared(args.prepared)
    segment = resolve_segment(args.segment, ds.n_days)
    out = _claim(Path(args.out), args.force)
    ckpts = [ModelCheckpoint.load(p) for p in spec.members]
    kinds = [c.kind for c in ckpts]
    if kinds.count("mtgnn") != 1:
        raise EnsembleError(f"ensemble needs exactly one mtgnn member, got kinds {kinds}")
    horizons = {(c.config.history, c.config.horizon) for c in ckpts}
    if len(horizons) != 1:
        raise EnsembleError(f"members disagree on (history, horizon): {sorted(horizons)}")
    history, horizon = horizons.pop()
    stride = args.stride or horizon
    if (args.jobs or 1) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda c: _predict_checkpoint(c, ds, segment, stride), ckpts))
    else:
        results = [_predict_checkpoint(c, ds, segment, stride) for c in ckpts]
    preds = [r[0] for r in results]
    origins = results[0][1]
    a_idx = [i for i, k in enumerate(kinds) if k == "agcrn"]
    m_idx = kinds.index("mtgnn")
    final = two_stage([preds[i] for i in a_idx], [spec.losses[i] for i in a_idx], preds[m_idx], spec.stage2)
    final = np.maximum(final, 0.0)
    _write_predictions(out, final, origins, {
        "model": "ensemble", "segment": args.segment, "stride": stride, "history": history, "horizon": horizon,
    })
    report = evaluate_over_segment(final, ds, segment, stride, history, horizon)
    print(f"wrote {len(origins)} forecasts -> {out}")
    print(f"farm_score={report.farm!r}")


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="windstgnn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, fn, help_, *flags):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        for f in flags:
            f(sp)
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        return sp

    def data(sp, required=True):
        sp.add_argument("--data", required=required)
        sp.add_argument("--location", required=required)

    def prepared(sp):
        sp.add_argument("--prepared", required=True, help="directory written by `prepare`")

    def config(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int)

    def stride(sp):
        sp.add_argument("--stride", type=int)

    def segment(sp):
        sp.add_argument("--segment", default="val", help="train, val, fold0..fold4 or all")

    sp = add("synth", cmd_synth, "generate a synthetic farm")
    sp.add_argument("--turbines", type=int, default=8)
    sp.add_argument("--days", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("prepare", cmd_prepare, "load, mask and feature-engineer raw CSVs", data)
    sp.add_argument("--out", required=True)

    sp = add("mask-report", cmd_mask_report, "count missing/unknown/abnormal records", lambda s: data(s, False))
    sp.add_argument("--prepared")
    sp.add_argument("--out")

    sp = add("build-graphs", cmd_build_graphs, "write geographic and semantic graphs", prepared, config)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train one model", prepared, config, stride)
    sp.add_argument("--model", choices=("agcrn", "mtgnn"), required=True)
    sp.add_argument("--fold", choices=("0", "1", "2", "3", "4", "all", "holdout"), default=None,
                    help="five-fold index, all, or holdout (default)")
    sp.add_argument("--graph", help="adjacency text file overriding the built graph")
    sp.add_argument("--out", required=True)

    sp = add("cross-validate", cmd_cross_validate, "train AGCRN on all five folds", prepared, config, stride)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("predict", cmd_predict, "forecast a segment with a checkpoint", prepared, stride, segment)
    sp.add_argument("--checkpoint", "--model-file", dest="checkpoint", required=True)
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "score forecasts (persistence if no --pred/--checkpoint)",
             prepared, stride, segment, config)
    sp.add_argument("--pred")
    sp.add_argument("--checkpoint")
    sp.add_argument("--out")

    sp = add("ensemble", cmd_ensemble, "two-stage blend of checkpoints", prepared, stride, segment)
    sp.add_argument("--config", help="ensemble spec: member=<ckpt> loss=<x> lines and stage2=a,b")
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
