"""Synthetic SDWPF-format wind farm for tests and desk-scale runs.

Wind is a shared diurnal cycle whose phase drifts with the turbine's x
coordinate, plus a slow shared weather component and per-turbine noise.
Power follows a cubic curve between cut-in and rated speed. A fixed share
of records is blanked (missing), curtailed (unknown) or corrupted
(abnormal).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .params import rng_for
from .schema import COL, DATA_HEADER, LOCATION_HEADER, MEASUREMENTS, SLOTS_PER_DAY, tmstamp_of

MISSING_RATE = 0.01
UNKNOWN_RATE = 0.01
ABNORMAL_RATE = 0.005

CUT_IN = 2.5
RATED_SPEED = 12.0
RATED_POWER = 1500.0

EVENT_NONE, EVENT_MISSING, EVENT_UNKNOWN, EVENT_ABNORMAL = 0, 1, 2, 3


@dataclass
class SynthFarm:
    data: pd.DataFrame
    location: pd.DataFrame
    events: np.ndarray  # (slots, N) injected event codes


def power_curve(wspd: np.ndarray) -> np.ndarray:
    frac = np.clip((wspd - CUT_IN) / (RATED_SPEED - CUT_IN), 0.0, 1.0) ** 3
    return np.where(wspd > CUT_IN, np.maximum(RATED_POWER * frac, 1.0), 0.0)


def generate_farm(turbines: int, days: int, seed: int = 0) -> SynthFarm:
    if turbines < 2 or days < 5:
        raise ValueError(f"need turbines >= 2 and days >= 5, got {turbines}, {days}")
    rng = rng_for(seed, "synth")
    n, s = turbines, days * SLOTS_PER_DAY

    cols = int(np.ceil(np.sqrt(n)))
    gx, gy = np.arange(n) % cols, np.arange(n) // cols
    x = 200.0 * gx + rng.normal(0.0, 20.0, n)
    y = 1000.0 * gy + rng.normal(0.0, 20.0, n)
    span = max(np.ptp(x), 1.0)

    t = np.arange(s)[:, None]
    day_angle = 2.0 * np.pi * t / SLOTS_PER_DAY
    phase = 0.6 * (x - x.min()) / span
    weather = np.zeros(s)
    shocks = rng.normal(0.0, 0.08, s)
    for i in range(1, s):
        weather[i] = 0.995 * weather[i - 1] + shocks[i]
    wspd = 7.0 + 3.5 * np.sin(day_angle - phase[None, :]) + weather[:, None] + rng.normal(0.0, 0.4, (s, n))
    wspd = np.maximum(wspd, 0.0)

    patv = power_curve(wspd) * (1.0 + np.clip(rng.normal(0.0, 0.03, (s, n)), -0.3, 0.3))
    calm = wspd <= CUT_IN
    patv = np.where(calm, -rng.uniform(0.0, 5.0, (s, n)), patv)

    etmp = 12.0 + 6.0 * np.sin(day_angle - 2.0) + 0.5 * weather[:, None] + rng.normal(0.0, 0.3, (s, n))
    itmp = etmp + 8.0 + 0.004 * np.maximum(patv, 0.0) + rng.normal(0.0, 0.5, (s, n))
    prtv = 0.15 * patv + rng.normal(0.0, 3.0, (s, n))
    wdir = np.clip(rng.normal(0.0, 15.0, (s, n)), -170.0, 170.0)
    ndir = 200.0 * np.sin(2.0 * np.pi * t / (7 * SLOTS_PER_DAY) + rng.uniform(0, 6.28, n)) + rng.normal(0.0, 5.0, (s, n))
    pab = 0.5 + 3.0 * np.maximum(wspd - RATED_SPEED, 0.0)
    pabs = [np.clip(pab + rng.normal(0.0, 0.1, (s, n)), 0.0, 60.0) for _ in range(3)]

    raw = np.stack([wspd, wdir, etmp, itmp, ndir, *pabs, prtv, patv], axis=-1)
    assert [MEASUREMENTS[i] for i in range(10)] == list(MEASUREMENTS)

    u = rng.random((s, n))
    events = np.full((s, n), EVENT_NONE, dtype=np.int8)
    events[u < MISSING_RATE + UNKNOWN_RATE + ABNORMAL_RATE] = EVENT_ABNORMAL
    events[u < MISSING_RATE + UNKNOWN_RATE] = EVENT_UNKNOWN
    events[u < MISSING_RATE] = EVENT_MISSING

    unk = events == EVENT_UNKNOWN
    for name in ("Pab1", "Pab2", "Pab3"):
        raw[..., COL[name]][unk] = 91.0 + 2.0 * rng.random(int(unk.sum()))
    raw[..., COL["Patv"]][unk] = 0.0

    ab = events == EVENT_ABNORMAL
    k = int(ab.sum())
    which = rng.random(k) < 0.5
    sign = np.where(rng.random(k) < 0.5, -1.0, 1.0)
    ndir_v = raw[..., COL["Ndir"]][ab]
    wdir_v = raw[..., COL["Wdir"]][ab]
    ndir_v[which] = sign[which] * (730.0 + 300.0 * rng.random(int(which.sum())))
    wdir_v[~which] = sign[~which] * (190.0 + 100.0 * rng.random(int((~which).sum())))
    raw[..., COL["Ndir"]][ab] = ndir_v
    raw[..., COL["Wdir"]][ab] = wdir_v
    # abnormal rows must not also trip an unknown rule
    patv_ab = raw[..., COL["Patv"]][ab]
    wspd_ab = raw[..., COL["Wspd"]][ab]
    raw[..., COL["Wspd"]][ab] = np.where((patv_ab <= 0) & (wspd_ab > CUT_IN), CUT_IN, wspd_ab)

    raw = np.round(raw, 2)
    raw[events == EVENT_MISSING] = np.nan

    slot = np.arange(s)
    frame = {
        "TurbID": np.repeat(np.arange(1, n + 1), s),
        "Day": np.tile(slot // SLOTS_PER_DAY + 1, n),
        "Tmstamp": np.tile(np.array([tmstamp_of(i) for i in range(SLOTS_PER_DAY)])[slot % SLOTS_PER_DAY], n),
    }
    turbine_major = raw.transpose(1, 0, 2).reshape(n * s, len(MEASUREMENTS))
    for j, name in enumerate(MEASUREMENTS):
        frame[name] = turbine_major[:, j]
    data = pd.DataFrame(frame, columns=list(DATA_HEADER))
    location = pd.DataFrame({"TurbID": np.arange(1, n + 1), "x": np.round(x, 2), "y": np.round(y, 2)},
                            columns=list(LOCATION_HEADER))
    return SynthFarm(data=data, location=location, events=events)


def write_farm(farm: SynthFarm, out_dir, data_name: str = "data.csv", location_name: str = "loc.csv") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path, loc_path = out / data_name, out / location_name
    farm.data.to_csv(data_path, index=False, float_format="%.2f", lineterminator="\n")
    farm.location.to_csv(loc_path, index=False, float_format="%.2f", lineterminator="\n")
    return data_path, loc_path


def synth_generate(turbines: int, days: int, seed: int, out_dir) -> tuple[Path, Path]:
    return write_farm(generate_farm(turbines, days, seed), out_dir)
