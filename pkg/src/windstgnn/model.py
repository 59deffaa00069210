"""Model-kind dispatch and checkpoints."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import agcrn, mtgnn, storage
from .config import RunConfig, from_flat, to_flat
from .data import Normalizer
from .graphs import sym_normalize
from .params import ParamStore
from .tensor import Tensor, no_grad

MODEL_KINDS = ("agcrn", "mtgnn")


def init_params(kind: str, cfg: RunConfig, n_nodes: int, seed: int) -> ParamStore:
    if kind == "agcrn":
        return agcrn.init_params(cfg.agcrn, n_nodes, seed)
    if kind == "mtgnn":
        return mtgnn.init_params(cfg.mtgnn, seed)
    raise ValueError(f"unknown model kind {kind!r}")


def model_graph(kind: str, adjacency: np.ndarray) -> np.ndarray:
    """The fixed graph operand each model consumes (normalised DTW for AGCRN, raw geo for MTGNN)."""
    return sym_normalize(adjacency) if kind == "agcrn" else np.asarray(adjacency, dtype=np.float64)


def forward(kind: str, cfg: RunConfig, params: ParamStore, graph: np.ndarray, x) -> Tensor:
    if kind == "agcrn":
        return agcrn.agcrn_forward(x, cfg.agcrn, params, graph)
    if kind == "mtgnn":
        return mtgnn.mtgnn_forward(x, cfg.mtgnn, params, graph)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class ModelCheckpoint:
    kind: str
    config: RunConfig
    normalizer: Normalizer
    params: ParamStore
    graph: np.ndarray          # the operand passed to forward
    best_val_loss: float
    fold: int                  # -1 for the holdout split
    epoch: int = 0

    def forward(self, x_norm) -> Tensor:
        return forward(self.kind, self.config, self.params, self.graph, x_norm)

    def predict(self, x_norm: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """Denormalised (unclamped) kW forecasts (B, T', N, 1) for normalised inputs."""
        outs = []
        with no_grad():
            for i in range(0, len(x_norm), batch_size):
                outs.append(self.forward(x_norm[i : i + batch_size]).data)
        if not outs:
            return np.zeros((0, self.config.horizon, self.graph.shape[0], 1))
        return self.normalizer.invert_patv(np.concatenate(outs, axis=0))

    def manifest(self) -> dict:
        man = {
            "model": self.kind,
            "fold": self.fold,
            "best_val_loss": float(self.best_val_loss),
            "epoch": self.epoch,
            "normalizer.mean": [float(v) for v in self.normalizer.mean],
            "normalizer.std": [float(v) for v in self.normalizer.std],
        }
        for k, v in to_flat(self.config).items():
            man[f"config.{k}"] = ",".join(str(x) for x in v) if isinstance(v, tuple) else ("none" if v is None else v)
        return man

    def to_bytes(self) -> bytes:
        arrays = dict(self.params.arrays())
        arrays["graph.adjacency"] = self.graph
        return storage.dumps_container(self.manifest(), arrays)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        man, arrays = storage.read_container(path)
        if man.get("model") not in MODEL_KINDS:
            raise storage.FormatError(f"{path}: not a model checkpoint")
        cfg = from_flat({k[len("config."):]: v for k, v in man.items() if k.startswith("config.")})
        graph = arrays.pop("graph.adjacency")
        return cls(
            kind=man["model"],
            config=cfg,
            normalizer=Normalizer(
                mean=storage.floats(man["normalizer.mean"]), std=storage.floats(man["normalizer.std"])
            ),
            params=ParamStore(arrays),
            graph=graph,
            best_val_loss=float(man["best_val_loss"]),
            fold=int(man["fold"]),
            epoch=int(man.get("epoch", 0)),
        )
