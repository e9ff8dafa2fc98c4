"""On-disk dataset layout and track CSV I/O.

A dataset root holds frames/NNNNNN.pgm (6-digit, zero-based), tracks.csv
with one row per (track, frame), and dataset.json describing frame size,
counts, train/test split ranges, and box dimensions. Poses serialize with
9 significant digits, theta wrapped to (-pi, pi].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .geom import Pose2
from .imaging import GrayImage, read_pgm

TRACK_HEADER = ["track_id", "frame", "x", "y", "theta", "width", "height"]


class DatasetError(RuntimeError):
    pass


def fmt9(value: float) -> str:
    """9-significant-digit float formatting used by all CSV output."""
    return f"{float(value):.9g}"


@dataclass(frozen=True)
class TrackRow:
    track_id: int
    frame: int
    pose: Pose2
    width: float
    height: float


def write_tracks_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.track_id,
                    r.frame,
                    fmt9(r.pose.x),
                    fmt9(r.pose.y),
                    fmt9(r.pose.theta),
                    fmt9(r.width),
                    fmt9(r.height),
                ]
            )


def read_tracks_csv(path) -> list[TrackRow]:
    rows = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACK_HEADER:
            raise DatasetError(f"{path}: bad track header {header}")
        for line in reader:
            track_id, frame = int(line[0]), int(line[1])
            key = (track_id, frame)
            if key in seen:
                raise DatasetError(f"{path}: duplicate (track, frame) = {key}")
            seen.add(key)
            rows.append(
                TrackRow(
                    track_id,
                    frame,
                    Pose2(float(line[2]), float(line[3]), float(line[4])),
                    float(line[5]),
                    float(line[6]),
                )
            )
    return rows


def frame_name(index: int) -> str:
    return f"{index:06d}.pgm"


class Dataset:
    """Read-side view of a dataset root directory."""

    def __init__(self, root):
        self.root = Path(root)
        meta_path = self.root / "dataset.json"
        if not meta_path.exists():
            raise DatasetError(f"missing dataset.json under {self.root}")
        with open(meta_path) as fh:
            self.meta = json.load(fh)
        for key in (
            "frame_width",
            "frame_height",
            "num_frames",
            "train_range",
            "test_range",
            "box_width",
            "box_height",
        ):
            if key not in self.meta:
                raise DatasetError(f"dataset.json missing field {key!r}")
        tr, te = self.meta["train_range"], self.meta["test_range"]
        if max(tr[0], te[0]) < min(tr[1], te[1]):
            raise DatasetError(f"train range {tr} overlaps test range {te}")
        rows = read_tracks_csv(self.root / "tracks.csv")
        self.tracks: dict[int, dict[int, TrackRow]] = {}
        for r in rows:
            self.tracks.setdefault(r.track_id, {})[r.frame] = r
        missing = sorted(
            {r.frame for r in rows if not (self.root / "frames" / frame_name(r.frame)).exists()}
        )
        if missing:
            raise DatasetError(f"tracks.csv references missing frames {missing[:5]}")

    @property
    def frame_width(self) -> int:
        return int(self.meta["frame_width"])

    @property
    def frame_height(self) -> int:
        return int(self.meta["frame_height"])

    @property
    def num_frames(self) -> int:
        return int(self.meta["num_frames"])

    @property
    def train_range(self) -> tuple[int, int]:
        lo, hi = self.meta["train_range"]
        return int(lo), int(hi)

    @property
    def test_range(self) -> tuple[int, int]:
        lo, hi = self.meta["test_range"]
        return int(lo), int(hi)

    @property
    def box_width(self) -> float:
        return float(self.meta["box_width"])

    @property
    def box_height(self) -> float:
        return float(self.meta["box_height"])

    def load_frame(self, index: int) -> GrayImage:
        path = self.root / "frames" / frame_name(index)
        if not path.exists():
            raise DatasetError(f"missing frame file {path}")
        return read_pgm(path)

    def poses_in_frame(self, index: int) -> list[Pose2]:
        return [t[index].pose for t in self.tracks.values() if index in t]

    def track_ids(self) -> list[int]:
        return sorted(self.tracks.keys())
