"""SDWPF column layout and the per-row record type."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

DATA_HEADER = (
    "TurbID", "Day", "Tmstamp",
    "Wspd", "Wdir", "Etmp", "Itmp", "Ndir", "Pab1", "Pab2", "Pab3", "Prtv", "Patv",
)
LOCATION_HEADER = ("TurbID", "x", "y")

# measurement columns, in file order
MEASUREMENTS = DATA_HEADER[3:]
COL = {name: i for i, name in enumerate(MEASUREMENTS)}

# model input features; DeltaPatv is derived
FEATURES = ("Wspd", "Etmp", "Itmp", "Prtv", "Patv", "DeltaPatv")
PATV_FEATURE = FEATURES.index("Patv")

SLOTS_PER_DAY = 144


def slot_of(day: int, tmstamp: str) -> int:
    """Global 10-minute slot index of ``(day, 'HH:MM')``; day is 1-based."""
    hh, mm = tmstamp.split(":")
    hh, mm = int(hh), int(mm)
    if not (0 <= hh < 24 and 0 <= mm < 60 and mm % 10 == 0) or day < 1:
        raise ValueError(f"bad day/timestamp ({day}, {tmstamp!r})")
    return (day - 1) * SLOTS_PER_DAY + hh * 6 + mm // 10


def tmstamp_of(slot: int) -> str:
    s = slot % SLOTS_PER_DAY
    return f"{s // 6:02d}:{(s % 6) * 10:02d}"


@dataclass(frozen=True)
class WindRecord:
    turb_id: int
    day: int
    tmstamp: str
    wspd: Optional[float] = None
    wdir: Optional[float] = None
    etmp: Optional[float] = None
    itmp: Optional[float] = None
    ndir: Optional[float] = None
    pab1: Optional[float] = None
    pab2: Optional[float] = None
    pab3: Optional[float] = None
    prtv: Optional[float] = None
    patv: Optional[float] = None

    @property
    def slot(self) -> int:
        return slot_of(self.day, self.tmstamp)

    def measurements(self) -> tuple[Optional[float], ...]:
        return tuple(getattr(self, name.lower()) for name in MEASUREMENTS)
