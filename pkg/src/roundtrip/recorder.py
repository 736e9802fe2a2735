"""Position-keyed disturbance recording and nearest-record retrieval."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRACK_COLUMNS = ("t", "px", "py", "pz", "fx", "fy", "fz", "tx", "ty", "tz")
SIGNIFICANT_DIGITS = 9
DEFAULT_FALLBACK_DISTANCE = 0.5


def quantize(x: float) -> float:
    """Round to the precision the track file keeps."""
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def _fmt(x: float) -> str:
    return f"{x:.{SIGNIFICANT_DIGITS}g}"


@dataclass(frozen=True)
class DisturbanceRecord:
    t: float
    position: tuple[float, float, float]
    force: tuple[float, float, float]
    torque: tuple[float, float, float]

    def row(self) -> tuple[float, ...]:
        return (self.t, *self.position, *self.force, *self.torque)

    @classmethod
    def from_row(cls, row) -> DisturbanceRecord:
        r = [float(v) for v in row]
        return cls(r[0], tuple(r[1:4]), tuple(r[4:7]), tuple(r[7:10]))


@dataclass(frozen=True)
class LookupResult:
    index: int
    distance: float
    record: DisturbanceRecord
    fallback: bool


class TrackError(ValueError):
    pass


class DisturbanceTrack:
    """Append-only list of disturbance records, queried by position.

    Values are rounded to the file precision on append, so a track written to
    disk and read back is identical to the one held in memory.
    """

    def __init__(self, fallback_distance: float = DEFAULT_FALLBACK_DISTANCE, metadata=None):
        self.fallback_distance = float(fallback_distance)
        self.metadata: dict = dict(metadata or {})
        self.records: list[DisturbanceRecord] = []
        self._positions: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> DisturbanceRecord:
        return self.records[i]

    def append(self, record: DisturbanceRecord) -> None:
        values = [quantize(float(v)) for v in record.row()]
        if not all(math.isfinite(v) for v in values):
            raise TrackError(f"non-finite record {record!r}")
        if self.records and values[0] <= self.records[-1].t:
            raise TrackError(
                f"timestamp {values[0]} does not follow the last record at {self.records[-1].t}"
            )
        self.records.append(DisturbanceRecord.from_row(values))
        self._positions = None

    def positions(self) -> np.ndarray:
        if self._positions is None:
            self._positions = np.array([r.position for r in self.records], dtype=float).reshape(-1, 3)
        return self._positions

    def as_array(self) -> np.ndarray:
        return np.array([r.row() for r in self.records], dtype=float).reshape(-1, len(TRACK_COLUMNS))

    def lookup_nearest(self, query) -> LookupResult:
        return lookup_nearest(self, query)


def squared_distances(points: np.ndarray, query) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    d = points - q
    # fixed summation order so every search path rounds identically
    return (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]


def lookup_nearest(track: DisturbanceTrack, query) -> LookupResult:
    """Closest record by Euclidean distance, scanning every record.

    Ties go to the lowest index. A nearest record farther than the track's
    fallback distance is returned with ``fallback=True``.
    """
    if not track.records:
        raise TrackError("cannot look up in an empty track")
    d2 = squared_distances(track.positions(), query)
    i = int(np.argmin(d2))
    dist = math.sqrt(d2[i])
    return LookupResult(i, dist, track.records[i], dist > track.fallback_distance)


class GridIndex:
    """Uniform-grid accelerator that reproduces :func:`lookup_nearest` exactly."""

    def __init__(self, track: DisturbanceTrack, cell: float = 0.05):
        if not track.records:
            raise TrackError("cannot index an empty track")
        self.track = track
        self.cell = float(cell)
        self.points = track.positions()
        keys = np.floor(self.points / self.cell).astype(np.int64)
        self.cells: dict[tuple[int, int, int], list[int]] = {}
        for i, k in enumerate(map(tuple, keys.tolist())):
            self.cells.setdefault(k, []).append(i)
        self.lo = keys.min(axis=0)
        self.hi = keys.max(axis=0)

    def _ring(self, center, k):
        cx, cy, cz = center
        for dx in range(-k, k + 1):
            for dy in range(-k, k + 1):
                for dz in range(-k, k + 1):
                    if max(abs(dx), abs(dy), abs(dz)) == k:
                        idx = self.cells.get((cx + dx, cy + dy, cz + dz))
                        if idx:
                            yield from idx

    def lookup_nearest(self, query) -> LookupResult:
        q = np.asarray(query, dtype=float)
        center = tuple(np.floor(q / self.cell).astype(np.int64).tolist())
        max_ring = int(
            max(np.max(np.abs(self.lo - center)), np.max(np.abs(self.hi - center)))
        )
        best = (math.inf, -1)
        for k in range(max_ring + 1):
            # every point in ring k lies at least (k - 1) cells away
            if best[1] >= 0 and (k - 1) * self.cell - 1e-9 > math.sqrt(best[0]):
                break
            ring = list(self._ring(center, k))
            if not ring:
                continue
            d2 = squared_distances(self.points[ring], q)
            for j, dj in zip(ring, d2.tolist()):
                if (dj, j) < best:
                    best = (dj, j)
        i = best[1]
        dist = math.sqrt(best[0])
        return LookupResult(i, dist, self.track.records[i], dist > self.track.fallback_distance)


def save_track(track: DisturbanceTrack, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and a JSON metadata sidecar next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_COLUMNS)
        for r in track.records:
            w.writerow([_fmt(v) for v in r.row()])
    meta_path = path.with_suffix(".json")
    meta = dict(track.metadata)
    meta["fallback_distance"] = track.fallback_distance
    meta["columns"] = list(TRACK_COLUMNS)
    meta["units"] = {"t": "s", "px,py,pz": "m", "fx,fy,fz": "N", "tx,ty,tz": "N m"}
    meta["records"] = len(track)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, meta_path


def load_track(path) -> DisturbanceTrack:
    path = Path(path)
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    fallback = meta.pop("fallback_distance", DEFAULT_FALLBACK_DISTANCE)
    for key in ("columns", "units", "records"):
        meta.pop(key, None)
    track = DisturbanceTrack(fallback, meta)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != TRACK_COLUMNS:
            raise TrackError(f"unexpected track header {header!r}")
        for row in reader:
            track.append(DisturbanceRecord.from_row(row))
    return track
