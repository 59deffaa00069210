"""Farm score: per-turbine mean of RMSE and MAE over the masked horizon, summed over turbines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import FarmDataset, Segment, window_origins


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreReport:
    per_turbine: np.ndarray   # (N,) scores, 0 for turbines without valid targets
    valid_counts: np.ndarray  # (N,) masked-in entries per turbine (summed over origins)
    farm: float
    origins: tuple[int, ...] = ()

    def to_csv(self, turbine_ids=None) -> str:
        ids = np.arange(1, len(self.per_turbine) + 1) if turbine_ids is None else turbine_ids
        rows = ["turbine,score,valid_count"]
        rows += [f"{int(t)},{float(s)!r},{int(c)}" for t, s, c in zip(ids, self.per_turbine, self.valid_counts)]
        rows.append(f"farm_score={float(self.farm)!r}")
        return "\n".join(rows) + "\n"


def turbine_score(pred, truth, mask=None) -> float | None:
    """0.5 * (RMSE + MAE) over masked-in entries, or None when nothing is valid."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    mask = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).ravel()
    if not (pred.shape == truth.shape == mask.shape):
        raise EvaluationError(f"turbine_score: lengths {pred.shape}, {truth.shape}, {mask.shape} differ")
    if not mask.any():
        return None
    r = pred[mask] - truth[mask]
    return 0.5 * (float(np.sqrt(np.mean(r * r))) + float(np.mean(np.abs(r))))


def farm_score(preds, truths, masks=None) -> ScoreReport:
    """Score (T', N) arrays; a trailing singleton channel axis is dropped."""
    preds, truths = _squeeze(preds), _squeeze(truths)
    masks = np.ones(preds.shape, dtype=bool) if masks is None else _squeeze(masks).astype(bool)
    if not (preds.shape == truths.shape == masks.shape) or preds.ndim != 2:
        raise EvaluationError(f"farm_score: shapes {preds.shape}, {truths.shape}, {masks.shape}")
    n = preds.shape[1]
    scores = np.zeros(n)
    for i in range(n):
        s = turbine_score(preds[:, i], truths[:, i], masks[:, i])
        scores[i] = 0.0 if s is None else s
    farm = 0.0
    for s in scores:
        farm += float(s)
    return ScoreReport(per_turbine=scores, valid_counts=masks.sum(axis=0), farm=farm)


def _squeeze(a) -> np.ndarray:
    a = np.asarray(a)
    return a[..., 0] if a.ndim == 3 and a.shape[-1] == 1 else a


def persistence_baseline(patv_hist, valid_hist, horizon: int = 288) -> np.ndarray:
    """Repeat each turbine's last valid Patv; fall back to the last observed value, then 0."""
    patv = np.asarray(patv_hist, dtype=np.float64)
    valid = np.asarray(valid_hist, dtype=bool)
    if patv.ndim != 2 or patv.shape != valid.shape or patv.shape[0] == 0:
        raise EvaluationError(f"persistence_baseline: need matching non-empty (T, N), got {patv.shape}, {valid.shape}")
    last = np.zeros(patv.shape[1])
    for i in range(patv.shape[1]):
        good = np.flatnonzero(valid[:, i])
        if good.size:
            last[i] = patv[good[-1], i]
            continue
        seen = np.flatnonzero(np.isfinite(patv[:, i]))
        last[i] = patv[seen[-1], i] if seen.size else 0.0
    return np.repeat(last[None, :, None], horizon, axis=0)


Predictor = Callable[[FarmDataset, np.ndarray], np.ndarray]


def persistence_predictor(history: int, horizon: int) -> Predictor:
    def predict(ds: FarmDataset, origins: np.ndarray) -> np.ndarray:
        patv, valid = ds.target_patv, ds.valid
        return np.stack([persistence_baseline(patv[o : o + history], valid[o : o + history], horizon) for o in origins])

    return predict


def checkpoint_predictor(ckpt, batch_size: int = 32) -> Predictor:
    """Adapter turning a model checkpoint into a predictor over dataset origins."""
    history = ckpt.config.history

    def predict(ds: FarmDataset, origins: np.ndarray) -> np.ndarray:
        feats = ckpt.normalizer.apply(ds.features)
        x = feats[np.asarray(origins)[:, None] + np.arange(history)]
        return ckpt.predict(x, batch_size)

    return predict


def segment_origins(segment: Segment, stride: int, history: int, horizon: int) -> np.ndarray:
    start, stop = segment
    if stride > stop - start:
        raise EvaluationError(f"stride {stride} exceeds segment length {stop - start}")
    origins = window_origins(segment, stride, history, horizon)
    if len(origins) == 0:
        raise EvaluationError(
            f"segment {segment} too short for history {history} + horizon {horizon}"
        )
    return origins


def evaluate_over_segment(
    predictions,
    ds: FarmDataset,
    segment: Segment,
    stride: int | None = None,
    history: int = 144,
    horizon: int = 288,
) -> ScoreReport:
    """Mean farm score over all forecast origins in ``segment``.

    ``predictions`` is an array (origins, T', N[, 1]) in kW aligned with the
    origins, or a callable ``(ds, origins) -> array``. Forecasts are clamped
    at zero before scoring.
    """
    stride = horizon if stride is None else stride
    origins = segment_origins(segment, stride, history, horizon)
    preds = predictions(ds, origins) if callable(predictions) else np.asarray(predictions, dtype=np.float64)
    if preds.ndim == 3:
        preds = preds[..., None]
    if preds.shape != (len(origins), horizon, ds.n_turbines, 1):
        raise EvaluationError(
            f"predictions {preds.shape} do not match {len(origins)} origins x ({horizon}, {ds.n_turbines}, 1)"
        )
    preds = np.maximum(preds, 0.0)
    truth, valid = ds.target_patv, ds.valid
    per = np.zeros(ds.n_turbines)
    counts = np.zeros(ds.n_turbines, dtype=np.int64)
    farm = 0.0
    for p, o in zip(preds, origins):
        ty = slice(o + history, o + history + horizon)
        rep = farm_score(p, truth[ty], valid[ty])
        per += rep.per_turbine
        counts += rep.valid_counts
        farm += rep.farm
    k = len(origins)
    return ScoreReport(per_turbine=per / k, valid_counts=counts, farm=farm / k, origins=tuple(int(o) for o in origins))
