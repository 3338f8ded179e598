"""MovieLens ingestion, dense index remapping, and chronological splitting.

All functions are pure; datasets and splits are immutable once built. The
split is leakage-free by construction: ratings are time-sorted and the three
parts are contiguous index ranges, so every training rating precedes every
validation and test rating.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DomainError(ValueError):
    """Field parsed fine but violates the rating domain."""


class RawRating(NamedTuple):
    user_raw: int
    item_raw: int
    rating: int
    timestamp: int


VALID_RATINGS = (1, 2, 3, 4, 5)


def _parse_lines(stream, sep: str, fmt_name: str):
    records = []
    for line_no, line in enumerate(stream, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        fields = line.split(sep)
        if len(fields) != 4:
            raise ParseError(line_no, f"expected 4 {fmt_name} fields, got {len(fields)}")
        try:
            user, item, rating, ts = (int(f) for f in fields)
        except ValueError:
            raise ParseError(line_no, f"non-integer field in {line!r}") from None
        if rating not in VALID_RATINGS:
            raise DomainError(f"line {line_no}: rating {rating} outside 1..5")
        if ts < 0:
            raise DomainError(f"line {line_no}: negative timestamp {ts}")
        records.append(RawRating(user, item, rating, ts))
    return records


def parse_ml100k(stream):
    """Parse tab-separated `user item rating timestamp` lines (ML-100k u.data)."""
    return _parse_lines(stream, "\t", "tab-separated")


def parse_ml1m(stream):
    """Parse `UserID::MovieID::Rating::Timestamp` lines (ML-1M ratings.dat)."""
    return _parse_lines(stream, "::", "'::'-separated")


@dataclass(frozen=True)
class RatingsDataset:
    """Time-sorted ratings with dense user/item indices.

    ratings columns: user_idx, item_idx, level_idx, timestamp. level_idx
    indexes into rating_levels (ascending distinct rating values).
    """

    user_idx: np.ndarray
    item_idx: np.ndarray
    level_idx: np.ndarray
    timestamp: np.ndarray
    n_users: int
    n_items: int
    rating_levels: tuple
    user_map: dict
    item_map: dict

    def __len__(self):
        return self.user_idx.shape[0]

    @property
    def n_levels(self) -> int:
        return len(self.rating_levels)

    def rating_values(self, indices=slice(None)) -> np.ndarray:
        """Actual rating values (not level indices) for the given positions."""
        levels = np.asarray(self.rating_levels, dtype=np.float64)
        return levels[self.level_idx[indices]]

    def edge_array(self, indices=slice(None)) -> np.ndarray:
        """Edges as an [n x 3] array of (user_idx, item_idx, level_idx), time order."""
        if isinstance(indices, range):
            indices = slice(indices.start, indices.stop)
        return np.stack(
            [self.user_idx[indices], self.item_idx[indices], self.level_idx[indices]],
            axis=1,
        )

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.user_idx, self.item_idx, self.level_idx, self.timestamp):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()


def build_dataset(raw) -> RatingsDataset:
    """Remap raw ids densely (first-appearance order) and sort by time.

    Duplicate (user, item) pairs keep only the latest-timestamp record; ties
    on timestamp keep the later file position. Sorting is stable with file
    position as tie-break, so equal timestamps preserve file order.
    """
    raw = list(raw)
    if not raw:
        raise ValueError("cannot build a dataset from zero ratings")

    user_map: dict = {}
    item_map: dict = {}
    for r in raw:
        user_map.setdefault(r.user_raw, len(user_map))
        item_map.setdefault(r.item_raw, len(item_map))

    # last write wins within equal timestamps = later file position wins
    latest: dict = {}
    for pos, r in enumerate(raw):
        key = (r.user_raw, r.item_raw)
        if key not in latest or r.timestamp >= raw[latest[key]].timestamp:
            latest[key] = pos
    kept = sorted(latest.values())

    order = sorted(kept, key=lambda pos: (raw[pos].timestamp, pos))
    levels = tuple(sorted({raw[pos].rating for pos in order}))
    level_of = {v: i for i, v in enumerate(levels)}

    n = len(order)
    user_idx = np.empty(n, dtype=np.int64)
    item_idx = np.empty(n, dtype=np.int64)
    level_idx = np.empty(n, dtype=np.int64)
    timestamp = np.empty(n, dtype=np.int64)
    for row, pos in enumerate(order):
        r = raw[pos]
        user_idx[row] = user_map[r.user_raw]
        item_idx[row] = item_map[r.item_raw]
        level_idx[row] = level_of[r.rating]
        timestamp[row] = r.timestamp

    return RatingsDataset(
        user_idx=user_idx,
        item_idx=item_idx,
        level_idx=level_idx,
        timestamp=timestamp,
        n_users=len(user_map),
        n_items=len(item_map),
        rating_levels=levels,
        user_map=user_map,
        item_map=item_map,
    )


def load_dataset(path, fmt: str) -> RatingsDataset:
    parser = {"ml100k": parse_ml100k, "ml1m": parse_ml1m}.get(fmt)
    if parser is None:
        raise ValueError(f"unknown dataset format {fmt!r}")
    with open(path, "r", encoding="utf-8") as fh:
        return build_dataset(parser(fh))


@dataclass(frozen=True)
class TemporalSplit:
    """Contiguous (train, val, test) index ranges into the time-sorted ratings."""

    train: range
    val: range
    test: range

    @property
    def sizes(self):
        return len(self.train), len(self.val), len(self.test)


def temporal_split(ds: RatingsDataset, test_frac=0.20, val_frac=0.20) -> TemporalSplit:
    """Last floor(test_frac*N) ratings -> test; last floor(val_frac*rest) -> val."""
    if not 0.0 < test_frac < 1.0 or not 0.0 < val_frac < 1.0:
        raise ValueError("split fractions must lie strictly between 0 and 1")
    n = len(ds)
    n_test = int(np.floor(test_frac * n))
    remainder = n - n_test
    n_val = int(np.floor(val_frac * remainder))
    n_train = remainder - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise ValueError(
            f"split leaves an empty part: train={n_train}, val={n_val}, test={n_test}")
    return TemporalSplit(
        train=range(0, n_train),
        val=range(n_train, n_train + n_val),
        test=range(n_train + n_val, n),
    )


def write_split_manifest(path, ds: RatingsDataset, split: TemporalSplit,
                         test_frac: float, val_frac: float, source: str = ""):
    """Persist an auditable description of a split as JSON."""
    manifest = {
        "source": source,
        "dataset_sha256": ds.checksum(),
        "n_ratings": len(ds),
        "n_users": ds.n_users,
        "n_items": ds.n_items,
        "rating_levels": list(ds.rating_levels),
        "test_frac": test_frac,
        "val_frac": val_frac,
        "train": [split.train.start, split.train.stop],
        "val": [split.val.start, split.val.stop],
        "test": [split.test.start, split.test.stop],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
