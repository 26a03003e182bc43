"""Dense panel containers and sample autocovariance.

A panel is an N x T matrix: one row per cross-sectional coordinate, one
column per time point.  Everything downstream (factor extraction, the
sieve fit, the bootstrap) consumes these containers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CsvParseError, InvalidInputError, InvalidLagError


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class PanelSeries:
    """Observed N x T series; immutable after construction."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.values, "panel")
        if arr.shape[0] < 1 or arr.shape[1] < 2:
            raise InvalidInputError(
                f"panel needs N >= 1 and T >= 2, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FactorSeries:
    """Latent r x T series (true, extracted, or bootstrap factors)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.values, "factor series")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"factor series has empty shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_factors(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LagCovariance:
    """Square autocovariance matrix together with its lag."""

    matrix: np.ndarray
    lag: int

    def __post_init__(self):
        arr = _as_matrix(self.matrix, "covariance")
        if arr.shape[0] != arr.shape[1]:
            raise InvalidInputError(f"covariance must be square, got {arr.shape}")
        if self.lag < 0:
            raise InvalidInputError("lag must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)


def column_mean(panel: PanelSeries) -> np.ndarray:
    """Time average of the panel, an N-vector."""
    return panel.values.mean(axis=1)


def sample_autocov(panel: PanelSeries, k: int) -> LagCovariance:
    """Sample autocovariance at lag k, demeaned with the full-sample mean.

    Returns (1/(T-k)) * sum_{t=1}^{T-k} (y_{t+k} - ybar)(y_t - ybar)',
    so entry (i, j) pairs coordinate i at time t+k with coordinate j at
    time t.  The divisor is T - k and the same ybar is used in both
    factors.
    """
    T = panel.n_periods
    if k < 0 or k > T - 2:
        raise InvalidLagError(f"lag {k} outside [0, {T - 2}] for T={T}")
    centered = panel.values - column_mean(panel)[:, None]
    m = T - k
    cov = centered[:, k:] @ centered[:, :m].T / m
    if k == 0:
        cov = (cov + cov.T) / 2.0  # exact symmetry at lag zero
    return LagCovariance(matrix=cov, lag=k)


def demean(series: FactorSeries) -> tuple[FactorSeries, np.ndarray]:
    """Remove row means; returns the centered series and the removed mean."""
    mean = series.values.mean(axis=1)
    return FactorSeries(series.values - mean[:, None]), mean


def read_panel_csv(path, transpose: bool = False) -> PanelSeries:
    """Load a panel from CSV: N rows of T comma-separated values.

    A header row is detected (and skipped) when any token of the first
    line does not parse as a number.  ``transpose`` flips a time-major
    file into the rows-are-coordinates orientation.
    """
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split(",")
            parsed = []
            for colno, tok in enumerate(tokens, start=1):
                try:
                    parsed.append(float(tok))
                except ValueError:
                    if lineno == 1 and not rows:
                        parsed = None  # header row
                        break
                    raise CsvParseError(
                        f"cannot parse {tok!r} as a number", row=lineno, col=colno
                    ) from None
            if parsed is None:
                continue
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise CsvParseError(
                    f"expected {width} columns, found {len(parsed)}", row=lineno
                )
            rows.append(parsed)
    if not rows:
        raise CsvParseError("no data rows found")
    arr = np.asarray(rows, dtype=np.float64)
    if transpose:
        arr = arr.T
    return PanelSeries(arr)


def write_panel_csv(path, panel: PanelSeries) -> None:
    """Write a panel as plain CSV, full double precision, no header."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in panel.values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
