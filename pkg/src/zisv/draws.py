"""MCMC schedules and the container for thinned posterior draws."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

# which sampler block produces each stored quantity
BLOCK_OF = {
    "theta": "trend",
    "h": "sv",
    "pi": "zero",
    "ystar": "ystar",
    "sigma2_theta": "static",
    "sigma2_h": "static",
    "sigma2_pi": "static",
    "Sigma_pi": "static",
    "C": "C",
}
PATHS = ("theta", "h", "pi")


@dataclass(frozen=True)
class Schedule:
    n_iter: int = 12000
    burn_in: int = 2000
    thin: int = 20

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ConfigError("schedule needs n_iter >= 1, burn_in >= 0, thin >= 1")
        if self.burn_in >= self.n_iter:
            raise ConfigError("burn_in must be smaller than n_iter")

    def keep(self, it: int) -> bool:
        """Whether 0-based iteration ``it`` is stored."""
        return it >= self.burn_in and (it + 1 - self.burn_in) % self.thin == 0

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


def blob_hash(path) -> str:
    """Git-style content hash (sha1 over ``blob <size>\\0<bytes>``)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class DrawStore:
    """Thinned post-burn-in draws of one chain.

    ``arrays[name]`` has the draw index first.  Paths are (n, T+1, K), the
    augmented data (n, T, K), per-series variances (n, K) and matrices
    (n, K, K).
    """

    model: str
    arrays: dict[str, np.ndarray]
    iterations: np.ndarray
    series_names: tuple[str, ...] = ()
    time_labels: tuple[str, ...] = ()
    scale_factors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return int(self.iterations.size)

    @property
    def K(self) -> int:
        return self.arrays["theta"].shape[-1]

    @property
    def T(self) -> int:
        return self.arrays["theta"].shape[1] - 1

    def __getitem__(self, name):
        return self.arrays[name]

    def __contains__(self, name):
        return name in self.arrays

    def last_state(self, r: int) -> dict:
        return {k: v[r] for k, v in self.arrays.items()}

    def equals(self, other: "DrawStore") -> bool:
        if self.arrays.keys() != other.arrays.keys():
            return False
        return np.array_equal(self.iterations, other.iterations) and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)

    # -- long-format CSV -------------------------------------------------

    def _rows(self):
        names = self.series_names or tuple(f"y{k + 1}" for k in range(self.K))
        for i, it in enumerate(self.iterations):
            it = int(it)
            for name, arr in self.arrays.items():
                block = BLOCK_OF.get(name, name)
                a = arr[i]
                if name in PATHS or name == "ystar":
                    first = 0 if name in PATHS else 1
                    for t in range(a.shape[0]):
                        for k in range(a.shape[1]):
                            yield (it, block, name, names[k], t + first, repr(float(a[t, k])))
                elif a.ndim == 1:
                    for k in range(a.shape[0]):
                        yield (it, block, name, names[k], "", repr(float(a[k])))
                else:
                    for r in range(a.shape[0]):
                        for c in range(a.shape[1]):
                            yield (it, block, f"{name}[{r + 1},{c + 1}]", "", "", repr(float(a[r, c])))

    def write_csv(self, path, with_series: bool | None = None) -> None:
        """``iter,block,name,t_index,value`` (plus ``series`` for panels)."""
        if with_series is None:
            with_series = self.K > 1 or self.model in ("zmucsv", "mucsv")
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if with_series:
                w.writerow(["iter", "block", "name", "series", "t_index", "value"])
                for it, block, name, series, t, v in self._rows():
                    w.writerow([it, block, name, series, t, v])
            else:
                w.writerow(["iter", "block", "name", "t_index", "value"])
                for it, block, name, _series, t, v in self._rows():
                    w.writerow([it, block, name, t, v])

    def write(self, outdir, stem: str = "draws", inputs=(), extra_meta: dict | None = None) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        self.write_csv(outdir / f"{stem}.csv")
        manifest = {
            "model": self.model,
            "n_draws": self.n_draws,
            "iterations": [int(i) for i in self.iterations],
            "series_names": list(self.series_names),
            "time_labels": list(self.time_labels),
            "scale_factors": None if self.scale_factors is None else [float(s) for s in self.scale_factors],
            "shapes": {k: list(v.shape[1:]) for k, v in self.arrays.items()},
            "inputs": {str(p): blob_hash(p) for p in inputs},
            **self.meta,
            **(extra_meta or {}),
        }
        path = outdir / f"{stem}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n",
                        encoding="utf-8")
        return path

    @classmethod
    def read(cls, outdir, stem: str = "draws") -> "DrawStore":
        outdir = Path(outdir)
        manifest = json.loads((outdir / f"{stem}.manifest.json").read_text(encoding="utf-8"))
        iters = np.array(manifest["iterations"], dtype=np.int64)
        pos = {int(it): i for i, it in enumerate(iters)}
        names = manifest["series_names"]
        col = {n: k for k, n in enumerate(names)} or None
        arrays = {k: np.full([len(iters), *shape], np.nan) for k, shape in manifest["shapes"].items()}
        with (outdir / f"{stem}.csv").open(newline="", encoding="utf-8") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            has_series = "series" in header
            for row in rd:
                if has_series:
                    it, _block, name, series, t, v = row
                else:
                    it, _block, name, t, v = row
                    series = names[0] if names else "y1"
                i = pos[int(it)]
                if "[" in name:
                    base, idx = name[:-1].split("[")
                    r, c = (int(x) - 1 for x in idx.split(","))
                    arrays[base][i, r, c] = float(v)
                    continue
                k = col[series] if col else int(series[1:]) - 1
                if name in PATHS:
                    arrays[name][i, int(t), k] = float(v)
                elif name == "ystar":
                    arrays[name][i, int(t) - 1, k] = float(v)
                else:
                    arrays[name][i, k] = float(v)
        sf = manifest.get("scale_factors")
        meta = {k: v for k, v in manifest.items()
                if k not in ("model", "n_draws", "iterations", "series_names", "time_labels",
                             "scale_factors", "shapes")}
        return cls(manifest["model"], arrays, iters, tuple(names), tuple(manifest["time_labels"]),
                   None if sf is None else np.array(sf), meta)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


class DrawCollector:
    """Accumulates states at the scheduled iterations into preallocated arrays."""

    def __init__(self, schedule: Schedule, shapes: dict[str, tuple]):
        n = schedule.n_draws
        self.schedule = schedule
        self.arrays = {k: np.empty((n, *s)) for k, s in shapes.items()}
        self.iterations = np.empty(n, dtype=np.int64)
        self._i = 0

    def offer(self, it: int, values: dict) -> None:
        if not self.schedule.keep(it):
            return
        for k, arr in self.arrays.items():
            arr[self._i] = values[k]
        self.iterations[self._i] = it
        self._i += 1

    def finish(self, model: str, **kw) -> DrawStore:
        n = self._i
        return DrawStore(model, {k: v[:n] for k, v in self.arrays.items()}, self.iterations[:n], **kw)
