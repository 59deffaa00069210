"""Masked Huber objective, Adam with global-norm clipping, and the training drivers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import (
    DataError,
    FarmDataset,
    Normalizer,
    Split,
    SplitPlan,
    fit_normalizer,
    make_split,
    window_origins,
)
from .graphs import AdjacencyGraph, dtw_source_series, geographic_graph, semantic_graph
from .model import ModelCheckpoint, forward, init_params, model_graph
from .params import ParamStore, rng_for
from .tensor import Tensor

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class NoValidTargetsError(ValueError):
    pass


# -- objective ---------------------------------------------------------------

def masked_huber(pred: Tensor, target: np.ndarray, mask: np.ndarray, delta: float = 5.0) -> Tensor:
    """Mean Huber penalty over entries where ``mask`` is true.

    Masked-out targets are never read, so they may hold anything (even NaN).
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape or target.shape != mask.shape:
        raise T.ShapeError(f"masked_huber: pred {pred.shape}, target {target.shape}, mask {mask.shape}")
    count = int(mask.sum())
    if count == 0:
        raise NoValidTargetsError("masked_huber: no valid targets in batch")
    clean = np.where(mask, target, 0.0)
    per_entry = T.huber(pred - clean, delta) * mask.astype(np.float64)
    return T.scale(T.sum_(per_entry), 1.0 / count)


# -- optimisation ------------------------------------------------------------

def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: float = 5.0) -> tuple[dict[str, np.ndarray], float]:
    """Rescale all gradients together when their joint L2 norm exceeds ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        return {k: g * factor for k, g in grads.items()}, norm
    return dict(grads), norm


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        if m.shape != p.shape:
            raise ValueError(f"adam state for {name} has shape {m.shape}, param {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# -- batching ----------------------------------------------------------------

@dataclass
class WindowSource:
    """Normalised arrays from which (input, target, mask) batches are gathered."""

    features: np.ndarray   # (S, N, C), normalised
    targets: np.ndarray    # (S, N), normalised Patv
    valid: np.ndarray      # (S, N)
    history: int
    horizon: int

    @classmethod
    def build(cls, ds: FarmDataset, normalizer: Normalizer, history: int, horizon: int) -> "WindowSource":
        return cls(
            features=normalizer.apply(ds.features),
            targets=normalizer.apply_patv(ds.target_patv),
            valid=ds.valid,
            history=history,
            horizon=horizon,
        )

    def batch(self, origins: np.ndarray):
        o = np.asarray(origins)[:, None]
        x = self.features[o + np.arange(self.history)]
        ty = o + self.history + np.arange(self.horizon)
        return x, self.targets[ty][..., None], self.valid[ty][..., None]


def augment_batch(x, y, m, donor_x, donor_y, donor_m, lam, apply):
    """Vectorised :func:`data.augment_sample` over a batch; rows with ``apply`` false pass through."""
    lam = np.where(apply, lam, 1.0)
    lx = lam[:, None, None, None]
    x = lx * x + (1.0 - lx) * donor_x
    y = lx * y + (1.0 - lx) * donor_y
    m = np.where(apply[:, None, None, None], m & donor_m, m)
    return x, y, m


def _segment_origins(segments, stride, history, horizon) -> np.ndarray:
    parts = [window_origins(seg, stride, history, horizon) for seg in segments]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


# -- training driver ---------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


def build_graph(kind: str, cfg: RunConfig, ds: FarmDataset, normalizer: Normalizer, split: Split) -> AdjacencyGraph:
    if kind == "agcrn":
        series = dtw_source_series(ds, normalizer, split.train_segments)
        return semantic_graph(series, cfg.graph.neighbours, cfg.graph.dtw_band)
    return geographic_graph(ds.coords, cfg.graph.eps)


def validation_loss(ckpt_params: ParamStore, kind: str, cfg: RunConfig, graph: np.ndarray,
                    source: WindowSource, origins: np.ndarray) -> float:
    total, count = 0.0, 0
    bs = cfg.train.batch_size
    with T.no_grad():
        for i in range(0, len(origins), bs):
            x, y, m = source.batch(origins[i : i + bs])
            if not m.any():
                continue
            pred = forward(kind, cfg, ckpt_params, graph, x)
            n = int(m.sum())
            total += masked_huber(pred, y, m, cfg.train.huber_delta).item() * n
            count += n
    if count == 0:
        raise NoValidTargetsError("validation windows contain no valid targets")
    return total / count


def train(
    kind: str,
    cfg: RunConfig,
    ds: FarmDataset,
    split: Split,
    *,
    fold: int = -1,
    adjacency: np.ndarray | None = None,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> tuple[ModelCheckpoint, list[EpochLog]]:
    """Fit one model on ``split.train`` and keep the best validation checkpoint.

    Epoch 0 in the log is the untrained model. ``adjacency`` overrides the
    graph otherwise built from the training days.
    """
    tc = cfg.train
    history, horizon = cfg.history, cfg.horizon
    normalizer = fit_normalizer(ds, split.train_segments)
    if adjacency is None:
        adjacency = build_graph(kind, cfg, ds, normalizer, split).matrix
    graph = model_graph(kind, adjacency)
    source = WindowSource.build(ds, normalizer, history, horizon)
    train_origins = _segment_origins(split.train_segments, tc.train_stride, history, horizon)
    val_origins = _segment_origins(split.val_segments, tc.eval_stride or horizon, history, horizon)
    if len(train_origins) == 0:
        raise DataError("training segments too short for a single window")
    if len(val_origins) == 0:
        raise DataError("validation segments too short for a single window")

    run_key = (kind, fold + 1)  # fold -1 (holdout) -> 0
    params = init_params(kind, cfg, ds.n_turbines, int(rng_for(tc.seed, "init", *run_key).integers(2**31)))
    shuffle_rng = rng_for(tc.seed, "shuffle", *run_key)
    aug_rng = rng_for(tc.seed, "augment", *run_key)
    state = AdamState()

    val0 = validation_loss(params, kind, cfg, graph, source, val_origins)
    history_log = [EpochLog(0, float("nan"), val0)]
    if on_epoch:
        on_epoch(history_log[-1])
    best_val, best_params, best_epoch = val0, params.copy(), 0
    names = list(params)
    for epoch in range(1, tc.epochs + 1):
        order = shuffle_rng.permutation(train_origins)
        losses = []
        for i in range(0, len(order), tc.batch_size):
            batch = order[i : i + tc.batch_size]
            x, y, m = source.batch(batch)
            if tc.augment_prob > 0:
                apply = aug_rng.random(len(batch)) < tc.augment_prob
                donors = aug_rng.choice(train_origins, size=len(batch))
                lam = aug_rng.uniform(0.5, 1.0, size=len(batch))
                apply &= donors != batch
                dx, dy, dm = source.batch(donors)
                x, y, m = augment_batch(x, y, m, dx, dy, dm, lam, apply)
            if not m.any():
                continue
            params.zero_grad()
            loss = masked_huber(forward(kind, cfg, params, graph, x), y, m, tc.huber_delta)
            if not np.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {i // tc.batch_size}")
            T.backward(loss)
            grads, _ = clip_gradients(params.grads(), tc.clip_norm)
            adam_step({k: params[k].data for k in names}, grads, state, tc.lr)
            losses.append(loss.item())
        val = validation_loss(params, kind, cfg, graph, source, val_origins)
        entry = EpochLog(epoch, float(np.mean(losses)) if losses else float("nan"), val)
        history_log.append(entry)
        log.info("%s fold=%d epoch=%d train=%.5f val=%.5f", kind, fold, epoch, entry.train_loss, val)
        if on_epoch:
            on_epoch(entry)
        if val < best_val:
            best_val, best_params, best_epoch = val, params.copy(), epoch

    ckpt = ModelCheckpoint(
        kind=kind, config=cfg, normalizer=normalizer, params=best_params, graph=graph,
        best_val_loss=best_val, fold=fold, epoch=best_epoch,
    )
    return ckpt, history_log


def format_log(entries: list[EpochLog]) -> str:
    rows = ["epoch,train_loss,val_loss"]
    rows += [f"{e.epoch},{e.train_loss!r},{e.val_loss!r}" for e in entries]
    return "\n".join(rows) + "\n"


def _cv_worker(args):
    cfg, ds, split, fold = args
    return train("agcrn", cfg, ds, split, fold=fold)


def cross_validate(
    cfg: RunConfig, ds: FarmDataset, plan: SplitPlan | None = None, *, jobs: int = 1, folds=None
) -> tuple[list[ModelCheckpoint], np.ndarray, list[list[EpochLog]]]:
    """Train AGCRN once per held-out fold; folds are independent and may run in worker processes."""
    plan = plan or make_split("five-fold", ds.n_days)
    if plan.kind != "five-fold":
        raise ValueError("cross-validation needs a five-fold split plan")
    folds = list(range(len(plan))) if folds is None else list(folds)
    tasks = [(cfg, ds, plan[k], k) for k in folds]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cv_worker, tasks))
    else:
        results = [_cv_worker(t) for t in tasks]
    ckpts = [r[0] for r in results]
    logs = [r[1] for r in results]
    return ckpts, np.array([c.best_val_loss for c in ckpts]), logs
