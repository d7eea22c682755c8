"""Log odds ratios from two-arm binomial counts."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import Sequence

from .model import Dataset, DatasetError, validate_dataset


@dataclass(frozen=True)
class TwoByTwoTable:
    r_t: int
    n_t: int
    r_c: int
    n_c: int

    def __post_init__(self):
        for name in ("r_t", "n_t", "r_c", "n_c"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, numbers.Integral):
                if isinstance(v, float) and v.is_integer():
                    object.__setattr__(self, name, int(v))
                    continue
                raise DatasetError(f"{name} must be an integer count, got {v!r}")
        if self.n_t < 1 or self.n_c < 1:
            raise DatasetError("each arm needs at least one patient")
        if not (0 <= self.r_t <= self.n_t and 0 <= self.r_c <= self.n_c):
            raise DatasetError(f"event counts outside [0, n]: {self}")

    def cells(self) -> tuple[int, int, int, int]:
        """Cells in the order (events T, non-events T, events C, non-events C)."""
        return (self.r_t, self.n_t - self.r_t, self.r_c, self.n_c - self.r_c)

    @property
    def needs_correction(self) -> bool:
        return min(self.cells()) == 0

    def swapped(self) -> "TwoByTwoTable":
        return TwoByTwoTable(self.r_c, self.n_c, self.r_t, self.n_t)


def log_odds_ratio(table: TwoByTwoTable) -> tuple[float, float]:
    """Log odds ratio (test vs control) and its large-sample standard error.

    If any cell is zero, 0.5 is added to all four cells before computing.
    """
    a, b, c, d = table.cells()
    if table.needs_correction:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    y = math.log((a * d) / (b * c))
    se = math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    return y, se


def dataset_from_tables(tables: Sequence[tuple[str, TwoByTwoTable]]) -> Dataset:
    if not tables:
        raise DatasetError("no tables given")
    rows = []
    flags = []
    for sid, table in tables:
        try:
            y, se = log_odds_ratio(table)
        except DatasetError as exc:
            raise DatasetError(str(exc), sid) from None
        rows.append((sid, y, se))
        flags.append(table.needs_correction)
    return validate_dataset(rows, corrected=flags)
