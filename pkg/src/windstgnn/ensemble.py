"""Two-stage ensembling: loss-reciprocal fold weights, then a fixed model-level blend."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

STAGE2_DEFAULT = (0.4, 0.6)
WEIGHT_TOL = 1e-12


class EnsembleError(ValueError):
    pass


def reciprocal_weights(losses: Sequence[float]) -> np.ndarray:
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise EnsembleError("reciprocal_weights: need a non-empty list of losses")
    if not np.all(np.isfinite(losses)) or np.any(losses <= 0):
        raise EnsembleError(f"reciprocal_weights: losses must be positive and finite, got {losses.tolist()}")
    inv = 1.0 / losses
    return inv / inv.sum()


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise EnsembleError(f"{w.size} weights for {n} members")
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise EnsembleError(f"weights must be nonnegative and sum to 1, got {w.tolist()}")
    return w


def blend(preds: Sequence[np.ndarray], weights) -> np.ndarray:
    """Convex combination of equally shaped member predictions, in member order."""
    if not preds:
        raise EnsembleError("blend: no members")
    preds = [np.asarray(p, dtype=np.float64) for p in preds]
    shape = preds[0].shape
    for i, p in enumerate(preds):
        if p.shape != shape:
            raise EnsembleError(f"blend: member {i} has shape {p.shape}, expected {shape}")
    w = _check_weights(weights, len(preds))
    out = np.zeros(shape)
    for wi, p in zip(w, preds):
        out += wi * p
    return out


def two_stage(agcrn_preds, agcrn_losses, mtgnn_pred, ratio=STAGE2_DEFAULT) -> np.ndarray:
    stage1 = blend(agcrn_preds, reciprocal_weights(agcrn_losses))
    return blend([stage1, mtgnn_pred], ratio)


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple[Path, ...]       # AGCRN fold checkpoints, then the MTGNN checkpoint last
    losses: tuple[float, ...]
    stage2: tuple[float, float] = STAGE2_DEFAULT

    def __post_init__(self):
        if len(self.members) != len(self.losses):
            raise EnsembleError("each member needs exactly one loss")
        if len(self.members) < 2:
            raise EnsembleError("an ensemble needs AGCRN members and one MTGNN member")
        _check_weights(self.stage2, 2)

    @classmethod
    def parse(cls, text: str, base: Path | None = None) -> "EnsembleSpec":
        members, losses, stage2 = [], [], STAGE2_DEFAULT
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = dict(tok.split("=", 1) for tok in line.split() if "=" in tok)
            if len(fields) != len(line.split()):
                raise EnsembleError(f"line {lineno}: expected key=value tokens: {line!r}")
            try:
                if "member" in fields:
                    path = Path(fields["member"])
                    members.append(path if base is None or path.is_absolute() else base / path)
                    losses.append(float(fields["loss"]))
                elif "stage2" in fields:
                    a, b = (float(v) for v in fields["stage2"].split(","))
                    stage2 = (a, b)
                else:
                    raise EnsembleError(f"line {lineno}: unknown entry {line!r}")
            except (KeyError, ValueError) as exc:
                if isinstance(exc, EnsembleError):
                    raise
                raise EnsembleError(f"line {lineno}: malformed entry {line!r}") from exc
        return cls(tuple(members), tuple(losses), stage2)

    @classmethod
    def load(cls, path) -> "EnsembleSpec":
        path = Path(path)
        return cls.parse(path.read_text(), base=path.parent)

    def format(self) -> str:
        rows = [f"member={m} loss={l!r}" for m, l in zip(self.members, self.losses)]
        rows.append(f"stage2={self.stage2[0]!r},{self.stage2[1]!r}")
        return "\n".join(rows) + "\n"
