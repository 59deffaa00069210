"""SDWPF ingestion, feature engineering, normalisation, windowing and splits."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import storage
from .schema import COL, DATA_HEADER, FEATURES, LOCATION_HEADER, MEASUREMENTS, PATV_FEATURE, SLOTS_PER_DAY
from .validity import RecordStatus, classify, clamp_nonnegative

REFERENCE_DAYS = 245
REFERENCE_TRAIN_DAYS = 214
STD_FLOOR = 1e-8

Segment = tuple[int, int]  # half-open slot range


class DataError(ValueError):
    pass


class SchemaError(DataError):
    pass


class DuplicateRecordError(DataError):
    pass


class OrderingError(DataError):
    pass


class SplitError(DataError):
    pass


@dataclass(frozen=True)
class FarmDataset:
    """Dense (slot, turbine) grid of one wind farm.

    ``raw`` holds the ten measurements in file order with NaN for anything
    absent; ``features`` is filled by :func:`engineer_features`.
    """

    raw: np.ndarray
    coords: np.ndarray
    turbine_ids: np.ndarray
    n_records: int
    features: np.ndarray | None = None
    fully_missing: np.ndarray | None = None
    status: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "status", classify(self.raw))

    @property
    def n_slots(self) -> int:
        return self.raw.shape[0]

    @property
    def n_turbines(self) -> int:
        return self.raw.shape[1]

    @property
    def n_days(self) -> int:
        return self.n_slots // SLOTS_PER_DAY

    @property
    def missing(self) -> np.ndarray:
        return self.status == RecordStatus.MISSING

    @property
    def valid(self) -> np.ndarray:
        return self.status == RecordStatus.VALID

    @property
    def raw_patv(self) -> np.ndarray:
        return self.raw[..., COL["Patv"]]

    @property
    def target_patv(self) -> np.ndarray:
        """Clamped Patv with missing entries zeroed; only meaningful where ``valid``."""
        _, patv = clamp_nonnegative(0.0, self.raw_patv)
        return np.nan_to_num(patv, nan=0.0)


def _check_header(path, expected) -> None:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
    if not first:
        raise SchemaError(f"{path}: empty file")
    got = tuple(c.strip() for c in first.split(","))
    if got != tuple(expected):
        raise SchemaError(f"{path}: header {got} does not match {tuple(expected)}")


def load_sdwpf(data_path, location_path) -> FarmDataset:
    """Read the SCADA CSV and turbine locations into a dense slot grid."""
    _check_header(data_path, DATA_HEADER)
    _check_header(location_path, LOCATION_HEADER)
    loc = pd.read_csv(location_path)
    if loc.empty:
        raise SchemaError(f"{location_path}: no turbines")
    loc = loc.sort_values("TurbID", kind="stable")
    ids = loc["TurbID"].to_numpy(dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise DuplicateRecordError(f"{location_path}: duplicate TurbID")
    coords = loc[["x", "y"]].to_numpy(dtype=np.float64)

    df = pd.read_csv(data_path, dtype={"Tmstamp": str})
    if df.empty:
        raise SchemaError(f"{data_path}: no records")
    col = {tid: i for i, tid in enumerate(ids)}
    turb = df["TurbID"].map(col)
    if turb.isna().any():
        bad = df.loc[turb.isna(), "TurbID"].iloc[0]
        raise SchemaError(f"{data_path}: TurbID {bad} not in location file")
    turb = turb.to_numpy(dtype=np.int64)
    day = df["Day"].to_numpy(dtype=np.int64)
    ts = df["Tmstamp"].str.strip()
    hh = pd.to_numeric(ts.str.slice(0, 2), errors="coerce")
    mm = pd.to_numeric(ts.str.slice(3, 5), errors="coerce")
    bad_ts = hh.isna() | mm.isna() | (ts.str.len() != 5) | (mm % 10 != 0) | (hh > 23) | (mm > 59)
    if bad_ts.any() or (day < 1).any():
        raise SchemaError(f"{data_path}: malformed Day/Tmstamp near row {int(np.argmax(bad_ts.to_numpy() | (day < 1))) + 2}")
    slot = (day - 1) * SLOTS_PER_DAY + hh.to_numpy(dtype=np.int64) * 6 + mm.to_numpy(dtype=np.int64) // 10

    n_days = int(day.max())
    n_slots = n_days * SLOTS_PER_DAY
    n = len(ids)
    key = turb * n_slots + slot
    uniq, counts = np.unique(key, return_counts=True)
    if (counts > 1).any():
        k = uniq[np.argmax(counts > 1)]
        raise DuplicateRecordError(f"duplicate record for turbine {ids[k // n_slots]} slot {k % n_slots}")
    order = np.argsort(turb, kind="stable")
    same = turb[order][1:] == turb[order][:-1]
    if (np.diff(slot[order])[same] <= 0).any():
        raise OrderingError(f"{data_path}: day/timestamp not increasing within a turbine")

    raw = np.full((n_slots, n, len(MEASUREMENTS)), np.nan)
    raw[slot, turb] = df[list(MEASUREMENTS)].to_numpy(dtype=np.float64)
    return FarmDataset(raw=raw, coords=coords, turbine_ids=ids, n_records=len(df))


def _forward_fill(x: np.ndarray) -> np.ndarray:
    """Forward-fill NaN along axis 0 per column; leading gaps become 0."""
    ok = ~np.isnan(x)
    idx = np.where(ok, np.arange(x.shape[0])[:, None], 0)
    np.maximum.accumulate(idx, axis=0, out=idx)
    out = np.take_along_axis(x, idx, axis=0)
    return np.nan_to_num(out, nan=0.0)


def engineer_features(ds: FarmDataset) -> FarmDataset:
    """Select Wspd, Etmp, Itmp, Prtv, Patv, impute, and append DeltaPatv."""
    prtv, patv = clamp_nonnegative(ds.raw[..., COL["Prtv"]], ds.raw[..., COL["Patv"]])
    cols = [ds.raw[..., COL["Wspd"]], ds.raw[..., COL["Etmp"]], ds.raw[..., COL["Itmp"]], prtv, patv]
    filled = [_forward_fill(c) for c in cols]
    patv_f = filled[-1]
    delta = np.zeros_like(patv_f)
    delta[1:] = patv_f[1:] - patv_f[:-1]
    feats = np.stack(filled + [delta], axis=-1)
    fully_missing = np.isnan(ds.raw_patv).all(axis=0)
    return dataclasses.replace(ds, features=feats, fully_missing=fully_missing)


# -- normalisation -----------------------------------------------------------

@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def apply_patv(self, x):
        return (x - self.mean[PATV_FEATURE]) / self.std[PATV_FEATURE]

    def invert_patv(self, z):
        return z * self.std[PATV_FEATURE] + self.mean[PATV_FEATURE]


def segment_slots(segments: Sequence[Segment]) -> np.ndarray:
    return np.concatenate([np.arange(a, b) for a, b in segments]) if segments else np.zeros(0, int)


def fit_normalizer(ds: FarmDataset, train_segments: Sequence[Segment]) -> Normalizer:
    """Pooled per-feature z-score statistics over the given slot ranges only."""
    if ds.features is None:
        raise DataError("fit_normalizer needs engineered features")
    slots = segment_slots(train_segments)
    if slots.size == 0:
        raise DataError("cannot fit normalizer on an empty training segment")
    x = ds.features[slots].reshape(-1, ds.features.shape[-1])
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


# -- windows -----------------------------------------------------------------

@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray        # (T, N, C), normalised
    target: np.ndarray       # (T', N, 1), raw kW, clamped
    target_mask: np.ndarray  # (T', N, 1), bool
    origin_slot: int         # first input slot


def window_origins(segment: Segment, stride: int, history: int, horizon: int) -> np.ndarray:
    start, stop = segment
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    last = stop - (history + horizon)
    if last < start:
        return np.zeros(0, dtype=np.int64)
    return np.arange(start, last + 1, stride, dtype=np.int64)


def window_dataset(
    ds: FarmDataset,
    segment: Segment,
    stride: int,
    history: int = 144,
    horizon: int = 288,
    normalizer: Normalizer | None = None,
) -> list[WindowSample]:
    """Input/target windows inside one contiguous slot range."""
    feats = ds.features if normalizer is None else normalizer.apply(ds.features)
    target, valid = ds.target_patv, ds.valid
    out = []
    for o in window_origins(segment, stride, history, horizon):
        t0, t1 = o + history, o + history + horizon
        out.append(
            WindowSample(
                input=feats[o:t0],
                target=target[t0:t1, :, None],
                target_mask=valid[t0:t1, :, None],
                origin_slot=int(o),
            )
        )
    return out


def augment_sample(sample: WindowSample, donor: WindowSample, lam: float) -> WindowSample:
    """Convex blend of a window with another period of the same turbines."""
    if sample.input.shape != donor.input.shape or sample.target.shape != donor.target.shape:
        raise ValueError(
            f"augment: sample {sample.input.shape}/{sample.target.shape} vs "
            f"donor {donor.input.shape}/{donor.target.shape}"
        )
    if not 0.5 <= lam <= 1.0:
        raise ValueError(f"blend weight must lie in [0.5, 1], got {lam}")
    return WindowSample(
        input=lam * sample.input + (1.0 - lam) * donor.input,
        target=lam * sample.target + (1.0 - lam) * donor.target,
        target_mask=sample.target_mask & donor.target_mask,
        origin_slot=sample.origin_slot,
    )


# -- splits ------------------------------------------------------------------

DayRange = tuple[int, int]  # inclusive, 1-based


@dataclass(frozen=True)
class Split:
    train: tuple[DayRange, ...]
    val: tuple[DayRange, ...]

    @property
    def train_segments(self) -> list[Segment]:
        return days_to_segments(self.train)

    @property
    def val_segments(self) -> list[Segment]:
        return days_to_segments(self.val)


@dataclass(frozen=True)
class SplitPlan:
    kind: str
    total_days: int
    splits: tuple[Split, ...]

    def __len__(self) -> int:
        return len(self.splits)

    def __getitem__(self, i: int) -> Split:
        return self.splits[i]


def days_to_segments(days: Sequence[DayRange]) -> list[Segment]:
    """Slot ranges for inclusive day ranges, with adjacent ranges merged."""
    segs: list[Segment] = []
    for a, b in sorted(days):
        s = ((a - 1) * SLOTS_PER_DAY, b * SLOTS_PER_DAY)
        if segs and segs[-1][1] == s[0]:
            segs[-1] = (segs[-1][0], s[1])
        else:
            segs.append(s)
    return segs


def make_split(kind: str, total_days: int = REFERENCE_DAYS) -> SplitPlan:
    """Contiguous day-based splits.

    ``five-fold`` cuts the days into five equal folds. ``holdout`` keeps the
    214/245 train proportion, rounded, with the rest as validation.
    """
    if kind == "five-fold":
        if total_days % 5 or total_days < 5:
            raise SplitError(f"five-fold split needs a day count divisible by 5, got {total_days}")
        w = total_days // 5
        folds = [(k * w + 1, (k + 1) * w) for k in range(5)]
        splits = tuple(
            Split(train=tuple(f for j, f in enumerate(folds) if j != k), val=(folds[k],))
            for k in range(5)
        )
    elif kind == "holdout":
        n_val = round(total_days * (REFERENCE_DAYS - REFERENCE_TRAIN_DAYS) / REFERENCE_DAYS)
        n_val = min(max(n_val, 1), total_days - 1)
        if total_days < 2:
            raise SplitError("holdout split needs at least 2 days")
        n_train = total_days - n_val
        splits = (Split(train=((1, n_train),), val=((n_train + 1, total_days),)),)
    else:
        raise SplitError(f"unknown split kind {kind!r}")
    return SplitPlan(kind=kind, total_days=total_days, splits=splits)


# -- prepared cache ----------------------------------------------------------

PREPARED_ARRAYS = ("raw", "features", "coords", "turbine_ids")


def save_prepared(ds: FarmDataset, out_dir, normalizer: Normalizer | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in PREPARED_ARRAYS:
        storage.write_array(out / f"{name}.f64", getattr(ds, name))
    manifest = {
        "format": "windstgnn-prepared-1",
        "n_records": ds.n_records,
        "n_turbines": ds.n_turbines,
        "n_days": ds.n_days,
        "n_slots": ds.n_slots,
        "features": ",".join(FEATURES),
        "measurements": ",".join(MEASUREMENTS),
    }
    if normalizer is not None:
        manifest["normalizer.mean"] = [float(v) for v in normalizer.mean]
        manifest["normalizer.std"] = [float(v) for v in normalizer.std]
    storage.write_manifest(out / "manifest.txt", manifest)


def load_prepared(path) -> FarmDataset:
    p = Path(path)
    if not (p / "manifest.txt").is_file():
        raise DataError(f"{p}: missing manifest.txt (run `prepare` first)")
    man = storage.read_manifest(p / "manifest.txt")
    if man.get("features") != ",".join(FEATURES):
        raise SchemaError(f"{p}: unexpected feature order {man.get('features')}")
    arrays = {name: storage.read_array(p / f"{name}.f64") for name in PREPARED_ARRAYS}
    ds = FarmDataset(
        raw=arrays["raw"],
        coords=arrays["coords"],
        turbine_ids=arrays["turbine_ids"].astype(np.int64),
        n_records=int(man["n_records"]),
        features=arrays["features"],
        fully_missing=np.isnan(arrays["raw"][..., COL["Patv"]]).all(axis=0),
    )
    return ds
