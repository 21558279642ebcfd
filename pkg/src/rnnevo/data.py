"""Time-series ingestion, normalization, splitting and synthetic task generation."""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed or schema-incompatible time-series data."""


@dataclass
class TimeSeriesSet:
    channels: list[str]
    series: list[np.ndarray]          # one [T, C] array per series, columns follow channels
    names: list[str] = field(default_factory=list)
    bounds: dict[str, tuple[float, float]] | None = None

    def __post_init__(self):
        if not self.names:
            self.names = [f"series{i}" for i in range(len(self.series))]

    def __len__(self) -> int:
        return len(self.series)

    def column(self, name: str) -> int:
        try:
            return self.channels.index(name)
        except ValueError:
            raise DataError(f"channel {name!r} not present in data") from None

    def series_dict(self, i: int) -> dict[str, np.ndarray]:
        return {c: self.series[i][:, k] for k, c in enumerate(self.channels)}

    def subset(self, indices) -> TimeSeriesSet:
        indices = list(indices)
        return TimeSeriesSet(list(self.channels), [self.series[i] for i in indices],
                             [self.names[i] for i in indices], self.bounds)

    def check(self) -> TimeSeriesSet:
        for name, s in zip(self.names, self.series):
            if s.ndim != 2 or s.shape[1] != len(self.channels):
                raise DataError(f"{name}: expected {len(self.channels)} channels")
            if s.shape[0] < 2:
                raise DataError(f"{name}: series needs at least 2 timesteps, has {s.shape[0]}")
        return self


# -- CSV --------------------------------------------------------------------

def load_flight_csv(path) -> dict[str, np.ndarray]:
    """Read one per-second flight log. Row and column numbers in errors are 1-based."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not any(h.strip() for h in header):
            raise DataError(f"{path}: missing header row")
        names = [h.strip() for h in header]
        if any(not n for n in names):
            raise DataError(f"{path}: row 1: empty channel name")
        if len(set(names)) != len(names):
            raise DataError(f"{path}: row 1: duplicate channel names")
        rows = []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(f"{path}: row {rowno}: expected {len(names)} fields, got {len(row)}")
            vals = []
            for colno, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: row {rowno}, column {colno} ({names[colno - 1]}): "
                                    f"non-numeric value {cell!r}") from None
            rows.append(vals)
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))
    return {n: arr[:, i].copy() for i, n in enumerate(names)}


def load_dir(path, channels: list[str] | None = None) -> TimeSeriesSet:
    """Load every ``*.csv`` in a directory (sorted by file name) as one series each."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"data directory {path} does not exist")
    files = sorted(path.glob("*.csv"))
    if not files:
        raise DataError(f"no .csv files in {path}")
    raw = [load_flight_csv(f) for f in files]
    channels = list(channels or raw[0].keys())
    series = []
    for f, r in zip(files, raw):
        missing = [c for c in channels if c not in r]
        if missing:
            raise DataError(f"{f}: missing channels {missing}")
        series.append(np.column_stack([r[c] for c in channels]))
    return TimeSeriesSet(channels, series, [f.stem for f in files]).check()


def write_csv(path, channels: list[str], arr: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(channels)
        for row in arr:
            w.writerow([repr(float(v)) for v in row])


def write_dir(ts: TimeSeriesSet, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, s in zip(ts.names, ts.series):
        write_csv(path / f"{name}.csv", ts.channels, s)


def read_manifest(path) -> list[str]:
    """Plain text, one parameter name per line; blank lines and ``#`` comments skipped."""
    names = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                names.append(line)
    if len(set(names)) != len(names):
        raise DataError(f"{path}: duplicate parameter names")
    return names


def write_manifest(path, names: list[str]) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")


# -- preprocessing ----------------------------------------------------------

def compute_bounds(ts: TimeSeriesSet) -> dict[str, tuple[float, float]]:
    stacked = np.vstack(ts.series)
    return {c: (float(stacked[:, i].min()), float(stacked[:, i].max()))
            for i, c in enumerate(ts.channels)}


def apply_bounds(ts: TimeSeriesSet, bounds: dict[str, tuple[float, float]]) -> TimeSeriesSet:
    lo = np.array([bounds[c][0] for c in ts.channels])
    hi = np.array([bounds[c][1] for c in ts.channels])
    span = hi - lo
    flat = span == 0
    span[flat] = 1.0
    out = []
    for s in ts.series:
        z = (s - lo) / span
        z[:, flat] = 0.5   # constant channels sit mid-range
        out.append(z)
    return TimeSeriesSet(list(ts.channels), out, list(ts.names), dict(bounds))


def normalize(train: TimeSeriesSet, valid: TimeSeriesSet | None = None):
    """Min-max scale to [0, 1] using bounds from the training series only.

    Validation values outside the training range are left unclipped.
    Returns (train, valid, bounds); valid is None when not given.
    """
    if not len(train):
        raise DataError("cannot normalize an empty set")
    bounds = compute_bounds(train)
    return (apply_bounds(train, bounds),
            apply_bounds(valid, bounds) if valid is not None else None,
            bounds)


def split(ts: TimeSeriesSet, n_train: int, n_valid: int) -> tuple[TimeSeriesSet, TimeSeriesSet]:
    """First ``n_train`` series train, the last ``n_valid`` validate."""
    if n_train < 1:
        raise DataError("training set would be empty")
    if n_valid < 1:
        raise DataError("validation set would be empty")
    if n_train + n_valid > len(ts):
        raise DataError(f"need {n_train + n_valid} series, have {len(ts)}")
    return ts.subset(range(n_train)), ts.subset(range(len(ts) - n_valid, len(ts)))


def default_split_sizes(n: int) -> tuple[int, int]:
    # a quarter held out, as in a 9/3 split of 12 flights
    if n < 2:
        raise DataError(f"need at least 2 series to split, have {n}")
    n_valid = max(1, round(n / 4))
    return n - n_valid, n_valid


def to_xy(ts: TimeSeriesSet, input_params: list[str], output_params: list[str],
          offset: int = 1) -> list[tuple[np.ndarray, np.ndarray]]:
    """Inputs at t paired with outputs at t + offset for every series."""
    in_idx = [ts.column(p) for p in input_params]
    out_idx = [ts.column(p) for p in output_params]
    pairs = []
    for name, s in zip(ts.names, ts.series):
        if s.shape[0] <= offset:
            raise DataError(f"{name}: {s.shape[0]} steps is too short for offset {offset}")
        end = s.shape[0] - offset
        pairs.append((np.ascontiguousarray(s[:end, in_idx]),
                      np.ascontiguousarray(s[offset:, out_idx])))
    return pairs


# -- synthetic tasks --------------------------------------------------------

@dataclass
class SynthSpec:
    """Sums of sinusoids plus AR(1) noise, with lagged cross-channel coupling.

    Each channel's periods and amplitudes come from ``physics_seed`` and the
    channel name alone, so two tasks that share a channel name share its
    dynamics. Phases and noise come from ``seed`` and differ per series.
    """
    channels: list[str]
    n_series: int = 12
    length: int = 200
    seed: int = 0
    physics_seed: int = 0
    n_sinusoids: int = 2
    period_range: tuple[int, int] = (8, 48)
    noise: float = 0.05
    ar: float = 0.7
    coupling: float = 0.4

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        d = dict(d)
        if "period_range" in d:
            d["period_range"] = tuple(d["period_range"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_synth_spec(path) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        return SynthSpec.from_dict(json.load(fh))


def _channel_physics(spec: SynthSpec, name: str):
    ss = np.random.SeedSequence([spec.physics_seed, zlib.crc32(name.encode("utf-8"))])
    prng = np.random.default_rng(ss)
    lo, hi = spec.period_range
    periods = prng.integers(lo, hi + 1, spec.n_sinusoids)
    amps = prng.uniform(0.5, 1.5, spec.n_sinusoids)
    return periods, amps


def synthesize(spec: SynthSpec, rng: np.random.Generator | None = None) -> TimeSeriesSet:
    """Generate ``spec.n_series`` series of ``spec.length`` steps, reproducible from the seeds."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    C = len(spec.channels)
    physics = [_channel_physics(spec, c) for c in spec.channels]
    t = np.arange(-1, spec.length)
    series = []
    for _ in range(spec.n_series):
        base = np.zeros((len(t), C))
        for c, (periods, amps) in enumerate(physics):
            phases = rng.uniform(0, 2 * math.pi, len(periods))
            for p, a, ph in zip(periods, amps, phases):
                # t mod p keeps noise-free signals exactly periodic
                base[:, c] += a * np.sin(2 * math.pi * (t % p) / p + ph)
        out = base[1:].copy()
        if spec.coupling and C > 1:
            lagged = base[:-1]
            others = (lagged.sum(axis=1, keepdims=True) - lagged) / (C - 1)
            out += spec.coupling * others
        if spec.noise:
            e = np.zeros(C)
            shocks = rng.normal(0, spec.noise, (spec.length, C))
            for k in range(spec.length):
                e = spec.ar * e + shocks[k]
                out[k] += e
        series.append(out)
    return TimeSeriesSet(list(spec.channels), series,
                         [f"series{i:03d}" for i in range(spec.n_series)]).check()
