"""Shared value types for the normal-normal hierarchical model.

Every type here is immutable after construction. A :class:`Dataset` may hold a
single study (useful for effect-size display), but every pooled analysis checks
``k >= 2`` at its own entry point via :func:`require_pooled`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

TAU_METHODS = ("DL", "REML", "ML", "MP", "BM", "BAYES-median")
INTERVAL_METHODS = ("NORM", "KH", "KH-MOD", "BAYES")


class MetaAnalysisError(ValueError):
    """Base class for input and model errors raised by this package."""


class DatasetError(MetaAnalysisError):
    """Invalid study data; ``study_id`` names the offending study when known."""

    def __init__(self, message: str, study_id: Optional[str] = None):
        super().__init__(message if study_id is None else f"study {study_id!r}: {message}")
        self.study_id = study_id


class ConvergenceError(MetaAnalysisError):
    """A numerical routine failed; ``best`` carries the best iterate, if any."""

    def __init__(self, message: str, best: Optional[float] = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class StudyResult:
    id: str
    y: float
    se: float


@dataclass(frozen=True)
class Dataset:
    studies: tuple[StudyResult, ...]
    corrected: tuple[bool, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return len(self.studies)

    @cached_property
    def y(self) -> np.ndarray:
        arr = np.array([s.y for s in self.studies], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def se(self) -> np.ndarray:
        arr = np.array([s.se for s in self.studies], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def s2(self) -> np.ndarray:
        arr = self.se * self.se
        arr.flags.writeable = False
        return arr

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.studies]

    @classmethod
    def from_arrays(cls, y: Sequence[float], se: Sequence[float],
                    ids: Optional[Sequence[str]] = None,
                    corrected: Sequence[bool] = ()) -> "Dataset":
        """Build a dataset from parallel arrays; ids default to ``"1".."k"``."""
        y = np.asarray(y, dtype=float)
        se = np.asarray(se, dtype=float)
        if ids is None:
            ids = [str(i + 1) for i in range(len(y))]
        return validate_dataset(zip(ids, y.tolist(), se.tolist()), corrected=corrected)

    def shifted(self, c: float) -> "Dataset":
        return Dataset(tuple(StudyResult(s.id, s.y + c, s.se) for s in self.studies),
                       self.corrected)

    def scaled(self, c: float) -> "Dataset":
        return Dataset(tuple(StudyResult(s.id, s.y * c, s.se * c) for s in self.studies),
                       self.corrected)


@dataclass(frozen=True)
class HeterogeneityEstimate:
    tau: float
    method: str
    tau_interval: Optional[tuple[float, float]] = None
    level: Optional[float] = None

    def __post_init__(self):
        if not (self.tau >= 0.0):
            raise MetaAnalysisError(f"tau must be >= 0, got {self.tau}")
        if self.tau_interval is not None:
            lo, hi = self.tau_interval
            if not (0.0 <= lo <= hi):
                raise MetaAnalysisError(f"invalid tau interval {self.tau_interval}")

    @property
    def tau2(self) -> float:
        return self.tau * self.tau


@dataclass(frozen=True)
class PooledResult:
    mu_hat: float
    se_mu: float
    weights: tuple[float, ...]
    tau_used: float

    @property
    def w_plus(self) -> float:
        return math.fsum(self.weights)


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    method: str

    def __post_init__(self):
        if not (0.0 < self.level < 1.0):
            raise MetaAnalysisError(f"level must lie in (0, 1), got {self.level}")
        if not (self.lower <= self.upper):
            raise MetaAnalysisError(f"interval bounds out of order: {self.lower} > {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def validate_dataset(raw: Iterable[tuple[str, float, float]],
                     corrected: Sequence[bool] = ()) -> Dataset:
    """Check ``(id, y, se)`` triples and return an immutable :class:`Dataset`.

    Input order is preserved. Raises :class:`DatasetError` naming the study
    for duplicate ids, non-finite estimates and non-positive standard errors.
    """
    studies = []
    seen = set()
    for row in raw:
        sid, y, se = row
        sid = str(sid)
        if sid in seen:
            raise DatasetError("duplicate study id", sid)
        seen.add(sid)
        try:
            y = float(y)
            se = float(se)
        except (TypeError, ValueError):
            raise DatasetError("estimate and standard error must be numeric", sid) from None
        if not math.isfinite(y):
            raise DatasetError(f"effect estimate is not finite ({y})", sid)
        if not math.isfinite(se) or se <= 0.0:
            raise DatasetError(f"standard error must be finite and > 0 (got {se})", sid)
        studies.append(StudyResult(sid, y, se))
    if not studies:
        raise DatasetError("dataset is empty")
    corrected = tuple(bool(c) for c in corrected)
    if corrected and len(corrected) != len(studies):
        raise DatasetError("correction flags do not match the number of studies")
    return Dataset(tuple(studies), corrected)


def require_pooled(dataset: Dataset, what: str = "this analysis") -> None:
    if dataset.k < 2:
        raise DatasetError(f"{what} needs at least 2 studies (k = {dataset.k})")
