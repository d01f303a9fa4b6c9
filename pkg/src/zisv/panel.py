"""Panels of real-valued series with exact zeros and missing entries."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import PanelError

# ternary zero-mask codes; ZERO == 1 so that gamma doubles as the indicator
NONZERO = 0
ZERO = 1
MISSING = -1


@dataclass(frozen=True)
class Panel:
    """A T x K panel.

    ``values[t, k]`` is meaningful only where ``missing[t, k]`` is False; the
    payload under the mask is NaN and is never read.  ``scale_factors[k]``
    multiplies column k back to the units it was ingested in.
    """

    values: np.ndarray
    missing: np.ndarray
    series_names: tuple[str, ...]
    time_labels: tuple[str, ...]
    scale_factors: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2)
        missing = np.array(self.missing, dtype=bool, ndmin=2)
        if values.shape != missing.shape:
            raise PanelError("values and missing mask differ in shape")
        T, K = values.shape
        if T < 2:
            raise PanelError("fewer than 2 rows")
        if K < 1:
            raise PanelError("panel has no series")
        values = np.where(missing, np.nan, values)
        if not np.all(np.isfinite(values[~missing])):
            raise PanelError("non-finite value in panel")
        scale = np.ones(K) if self.scale_factors is None else np.asarray(self.scale_factors, dtype=float)
        if scale.shape != (K,) or np.any(~(scale > 0)):
            raise PanelError("scale factors must be K positive reals")
        if len(self.series_names) != K or len(self.time_labels) != T:
            raise PanelError("label counts do not match panel shape")
        values.setflags(write=False)
        missing.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "scale_factors", scale)
        object.__setattr__(self, "series_names", tuple(self.series_names))
        object.__setattr__(self, "time_labels", tuple(self.time_labels))

    @classmethod
    def from_arrays(cls, values, missing=None, series_names=None, time_labels=None, scale_factors=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if missing is None:
            missing = np.isnan(values)
        T, K = values.shape
        if series_names is None:
            series_names = [f"y{k + 1}" for k in range(K)]
        if time_labels is None:
            time_labels = [str(t + 1) for t in range(T)]
        return cls(values, missing, tuple(series_names), tuple(time_labels), scale_factors)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return ~self.missing

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with the missing payload replaced by ``fill``."""
        return np.where(self.missing, fill, self.values)

    def unscaled(self) -> np.ndarray:
        return self.values * self.scale_factors

    def head(self, n: int) -> "Panel":
        return replace(self, values=self.values[:n], missing=self.missing[:n],
                       time_labels=self.time_labels[:n])

    def rows(self, start: int, stop: int) -> "Panel":
        return replace(self, values=self.values[start:stop], missing=self.missing[start:stop],
                       time_labels=self.time_labels[start:stop])

    def select(self, columns) -> "Panel":
        cols = np.atleast_1d(columns)
        return replace(self, values=self.values[:, cols], missing=self.missing[:, cols],
                       series_names=tuple(self.series_names[c] for c in cols),
                       scale_factors=self.scale_factors[cols])


@dataclass(frozen=True)
class ZeroMask:
    """Ternary mask: ``ZERO`` (1), ``NONZERO`` (0) or ``MISSING`` (-1)."""

    gamma: np.ndarray

    @property
    def zero(self) -> np.ndarray:
        return self.gamma == ZERO

    @property
    def nonzero(self) -> np.ndarray:
        return self.gamma == NONZERO

    @property
    def observed(self) -> np.ndarray:
        return self.gamma != MISSING

    @property
    def latent(self) -> np.ndarray:
        """Entries whose nonzero value y* is unobserved (zero or missing)."""
        return self.gamma != NONZERO


def _natural_key(label: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", label)]


@dataclass(frozen=True)
class IngestOptions:
    delimiter: str = ","
    missing_tokens: tuple[str, ...] = ("",)
    check_time_order: bool = True


def load_panel(path, config: IngestOptions | None = None) -> Panel:
    """Read a panel CSV: one time-label column followed by K numeric columns.

    Empty cells are missing.  Values are parsed with ``float`` so an exact
    ``0`` (or ``0.0``) stays an exact zero.
    """
    config = config or IngestOptions()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=config.delimiter))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise PanelError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise PanelError(f"{path}: need a time column and at least one series column")
    if len(body) < 2:
        raise PanelError(f"{path}: fewer than 2 rows")
    K = len(header) - 1
    values = np.full((len(body), K), np.nan)
    missing = np.zeros((len(body), K), dtype=bool)
    labels = []
    for i, row in enumerate(body, start=2):
        if len(row) != K + 1:
            raise PanelError(f"{path}:{i}: expected {K + 1} fields, found {len(row)}")
        labels.append(row[0].strip())
        for k, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell in config.missing_tokens:
                missing[i - 2, k] = True
                continue
            try:
                v = float(cell)
            except ValueError:
                raise PanelError(f"{path}:{i}: non-numeric cell {cell!r} in column {header[k + 1]!r}") from None
            if not np.isfinite(v):
                raise PanelError(f"{path}:{i}: non-finite cell {cell!r}")
            values[i - 2, k] = v
    if len(set(labels)) != len(labels):
        dup = sorted({x for x in labels if labels.count(x) > 1})
        raise PanelError(f"{path}: duplicate time labels {dup}")
    if config.check_time_order:
        keys = [_natural_key(x) for x in labels]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise PanelError(f"{path}: time labels are not strictly increasing")
    names = [h.strip() for h in header[1:]]
    empty = np.flatnonzero(missing.all(axis=0))
    if empty.size:
        raise PanelError(f"series entirely missing: {[names[k] for k in empty]}")
    return Panel(values, missing, tuple(names), tuple(labels))


def write_panel(panel: Panel, path, unscale: bool = False, time_header: str = "time") -> None:
    vals = panel.unscaled() if unscale else panel.values
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([time_header, *panel.series_names])
        for t, label in enumerate(panel.time_labels):
            w.writerow([label, *("" if panel.missing[t, k] else repr(float(vals[t, k]))
                                 for k in range(panel.K))])


def write_scale_factors(panel: Panel, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "scale_factor"])
        for name, s in zip(panel.series_names, panel.scale_factors):
            w.writerow([name, repr(float(s))])


def scale_to_common_sd(panel: Panel) -> Panel:
    """Divide each series by its sample SD so every series has SD 1.

    The SD uses the n-1 denominator over all non-missing entries, zeros
    included.  Zeros stay bitwise zero (0 / s == 0).
    """
    sds = np.empty(panel.K)
    for k in range(panel.K):
        x = panel.values[panel.observed[:, k], k]
        name = panel.series_names[k]
        if x.size < 2:
            raise PanelError(f"series {name!r} has fewer than 2 observations")
        sd = x.std(ddof=1)
        if not sd > 0:
            raise PanelError(f"series {name!r} has zero variance")
        sds[k] = sd
    return replace(panel, values=panel.values / sds, scale_factors=panel.scale_factors * sds)


def unscale(panel: Panel) -> Panel:
    return replace(panel, values=panel.unscaled(), scale_factors=np.ones(panel.K))


def derive_zero_mask(panel: Panel) -> ZeroMask:
    gamma = np.full(panel.values.shape, NONZERO, dtype=np.int8)
    gamma[panel.observed & (panel.filled(1.0) == 0.0)] = ZERO
    gamma[panel.missing] = MISSING
    return ZeroMask(gamma)
