"""Target caveat rules: zero clamping and missing/unknown/abnormal masking.

All threshold comparisons are strict. The lower Wdir bound is -180 degrees,
mirroring the upper one.
"""

from __future__ import annotations

import enum

import numpy as np

from .schema import COL, MEASUREMENTS, WindRecord

WSPD_UNKNOWN = 2.5
PAB_UNKNOWN = 89.0
NDIR_ABNORMAL = 720.0
WDIR_ABNORMAL = 180.0


class RecordStatus(enum.IntEnum):
    # lower value wins when several rules fire
    MISSING = 0
    UNKNOWN = 1
    ABNORMAL = 2
    VALID = 3


def clamp_nonnegative(prtv, patv):
    """Replace negative reactive/active power by 0; NaN passes through."""
    prtv = np.asarray(prtv, dtype=np.float64)
    patv = np.asarray(patv, dtype=np.float64)
    return np.where(prtv < 0, 0.0, prtv), np.where(patv < 0, 0.0, patv)


def classify(raw: np.ndarray) -> np.ndarray:
    """Vectorised status codes for a ``(..., 10)`` array of raw measurements.

    NaN marks a missing measurement. Patv must not be clamped yet.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] != len(MEASUREMENTS):
        raise ValueError(f"expected {len(MEASUREMENTS)} measurement columns, got {raw.shape[-1]}")
    with np.errstate(invalid="ignore"):
        missing = np.isnan(raw).any(axis=-1)
        patv, wspd = raw[..., COL["Patv"]], raw[..., COL["Wspd"]]
        pabs = raw[..., [COL["Pab1"], COL["Pab2"], COL["Pab3"]]]
        unknown = ((patv <= 0) & (wspd > WSPD_UNKNOWN)) | (pabs > PAB_UNKNOWN).any(axis=-1)
        ndir, wdir = raw[..., COL["Ndir"]], raw[..., COL["Wdir"]]
        abnormal = (
            (ndir > NDIR_ABNORMAL) | (ndir < -NDIR_ABNORMAL)
            | (wdir > WDIR_ABNORMAL) | (wdir < -WDIR_ABNORMAL)
        )
    status = np.full(raw.shape[:-1], RecordStatus.VALID, dtype=np.int8)
    status[abnormal] = RecordStatus.ABNORMAL
    status[unknown] = RecordStatus.UNKNOWN
    status[missing] = RecordStatus.MISSING
    return status


def classify_record(record: WindRecord) -> RecordStatus:
    values = [np.nan if v is None else float(v) for v in record.measurements()]
    return RecordStatus(int(classify(np.array(values))))


def status_counts(status: np.ndarray) -> dict[str, int]:
    return {s.name.lower(): int(np.count_nonzero(status == s)) for s in RecordStatus}


def build_mask(raw: np.ndarray) -> tuple[np.ndarray, dict[str, int]]:
    """Validity mask (True = usable target) plus per-status counts."""
    status = classify(raw)
    return status == RecordStatus.VALID, status_counts(status)


def format_mask_report(counts: dict[str, int]) -> str:
    total = sum(counts.values())
    lines = []
    for name in ("valid", "missing", "unknown", "abnormal"):
        n = counts.get(name, 0)
        share = 100.0 * n / total if total else 0.0
        lines.append(f"{name:<9} {n:>10d}  ({share:6.2f}%)")
    lines.extend(f"{name}={counts.get(name, 0)}" for name in ("valid", "missing", "unknown", "abnormal"))
    lines.append(f"total={total}")
    return "\n".join(lines)
