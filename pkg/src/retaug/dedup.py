"""Perceptual-hash near-duplicate detection and leakage accounting.

The 64-bit hash is a DCT fingerprint with every step pinned so hashes are
stable across platforms: Rec.601 luma, bilinear resample to 32x32, 2-D DCT-II,
top-left 8x8 coefficient block, bits = coefficient > median of the 63 AC
coefficients (DC bit forced to 0, row-major bit order).

Candidate pairs use strict Hamming distance (< radius). Scans run on a
BK-tree but are contractually identical to brute force.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.fft import dct

from .errors import DecodeError, InvalidSample, TooSmall, UnknownSplit
from .util import round_half_away

DEFAULT_RADIUS = 10
_LUMA = (0.299, 0.587, 0.114)
_HASH_SIZE = 32


def _to_luma(image) -> np.ndarray:
    """Accepts a PIL image or ndarray; returns float64 luma (H, W)."""
    if hasattr(image, "mode"):  # PIL image
        arr = np.asarray(image.convert("RGB") if image.mode not in ("L", "I", "F") else image)
    else:
        arr = np.asarray(image)
    if arr.ndim == 2:
        return arr.astype(np.float64)
    if arr.ndim == 3 and arr.shape[2] >= 3:
        rgb = arr[:, :, :3].astype(np.float64)
        return _LUMA[0] * rgb[:, :, 0] + _LUMA[1] * rgb[:, :, 1] + _LUMA[2] * rgb[:, :, 2]
    raise DecodeError(f"unsupported raster shape {arr.shape}")


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Classic bilinear sampling at output pixel centers (edges clamped)."""
    h, w = img.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = img[np.ix_(y0, x0)] * (1.0 - wx) + img[np.ix_(y0, x1)] * wx
    bottom = img[np.ix_(y1, x0)] * (1.0 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1.0 - wy) + bottom * wy


def phash64(image) -> int:
    """64-bit perceptual hash of a decoded raster (deterministic)."""
    luma = _to_luma(image)
    if min(luma.shape) < 8:
        raise TooSmall(f"image sides {luma.shape} are below the 8 px hashing minimum")
    small = _bilinear_resize(luma, _HASH_SIZE, _HASH_SIZE)
    coeffs = dct(dct(small, type=2, axis=0), type=2, axis=1)
    block = coeffs[:8, :8].flatten()
    median = float(np.median(block[1:]))
    bits = 0
    for i in range(1, 64):
        if block[i] > median:
            bits |= 1 << i
    return bits


def phash_file(path) -> int:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            img.load()
            return phash64(img)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path} is not a decodable image") from exc


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


class BKTree:
    """Hamming-metric tree over 64-bit hashes; multiple payloads may share a hash."""

    def __init__(self):
        self._root = None  # [hash, payloads, {distance: child}]

    def add(self, value: int, payload) -> None:
        if self._root is None:
            self._root = [value, [payload], {}]
            return
        node = self._root
        while True:
            d = hamming(value, node[0])
            if d == 0:
                node[1].append(payload)
                return
            child = node[2].get(d)
            if child is None:
                node[2][d] = [value, [payload], {}]
                return
            node = child

    def within(self, value: int, radius: int) -> list[tuple[int, list]]:
        """All (hash, payloads) whose distance to value is strictly below radius."""
        if self._root is None:
            return []
        hits = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            d = hamming(value, node[0])
            if d < radius:
                hits.append((node[0], node[1]))
            lo, hi = d - radius + 1, d + radius - 1
            for dist, child in node[2].items():
                if lo <= dist <= hi:
                    stack.append(child)
        return hits

    def any_within(self, value: int, radius: int) -> bool:
        if self._root is None:
            return False
        stack = [self._root]
        while stack:
            node = stack.pop()
            d = hamming(value, node[0])
            if d < radius:
                return True
            lo, hi = d - radius + 1, d + radius - 1
            for dist, child in node[2].items():
                if lo <= dist <= hi:
                    stack.append(child)
        return False


class Verdict(str, Enum):
    PENDING = "pending"
    TRUE_DUPLICATE = "true-duplicate"
    NOT_DUPLICATE = "not-duplicate"


@dataclass
class CandidatePair:
    """A hash-flagged potential duplicate awaiting a human verdict."""

    left_id: str
    right_id: str
    distance: int
    verdict: Verdict = Verdict.PENDING
    reviewer: Optional[str] = None
    reviewed_at: Optional[float] = None


class MultiIndex:
    """Pigeonhole lookup over 64-bit hashes split into four 16-bit chunks.

    If hamming(a, b) < radius, some chunk pair differs in at most
    floor((radius - 1) / 4) bits, so probing every chunk variant within that
    budget finds every true match; candidates are then verified exactly.
    Much faster than a BK-tree for small radii on large random corpora.
    """

    _CHUNKS = 4
    _BITS = 16

    def __init__(self):
        self._values: dict = {}
        self._buckets: list[dict[int, list]] = [{} for _ in range(self._CHUNKS)]

    def add(self, value: int, payload) -> None:
        self._values.setdefault(value, []).append(payload)
        if len(self._values[value]) > 1:
            return  # chunks already indexed for this hash value
        for pos in range(self._CHUNKS):
            chunk = (value >> (self._BITS * pos)) & 0xFFFF
            self._buckets[pos].setdefault(chunk, []).append(value)

    @staticmethod
    def _variants(chunk: int, max_flips: int):
        from itertools import combinations

        yield chunk
        bits = list(range(MultiIndex._BITS))
        for flips in range(1, max_flips + 1):
            for positions in combinations(bits, flips):
                mutated = chunk
                for p in positions:
                    mutated ^= 1 << p
                yield mutated

    def within(self, value: int, radius: int) -> list[tuple[int, list]]:
        max_flips = (radius - 1) // self._CHUNKS
        seen = set()
        for pos in range(self._CHUNKS):
            chunk = (value >> (self._BITS * pos)) & 0xFFFF
            bucket = self._buckets[pos]
            for variant in self._variants(chunk, max_flips):
                for candidate in bucket.get(variant, ()):
                    seen.add(candidate)
        return [
            (candidate, self._values[candidate])
            for candidate in seen
            if hamming(candidate, value) < radius
        ]


def scan(
    left: Mapping[str, int], right: Mapping[str, int], radius: int = DEFAULT_RADIUS
) -> list[CandidatePair]:
    """All cross pairs with hamming < radius (strict), each exactly once.

    Cross-set pairs keep (left, right) orientation; scanning a set against
    itself emits each unordered pair once with left_id < right_id and skips
    self-pairs. Output is sorted by (left_id, right_id).
    """
    if not 1 <= radius <= 64:
        raise ValueError(f"radius must be in 1..64, got {radius}")
    same_set = left is right
    # multi-index probing wins while the per-chunk flip budget stays small
    index = MultiIndex() if radius <= 24 else BKTree()
    for image_id in sorted(right):
        index.add(right[image_id], image_id)

    pairs = []
    for left_id in sorted(left):
        for _, right_ids in index.within(left[left_id], radius):
            for right_id in right_ids:
                if same_set:
                    if not left_id < right_id:
                        continue
                pairs.append(
                    CandidatePair(left_id, right_id, hamming(left[left_id], right[right_id]))
                )
    pairs.sort(key=lambda p: (p.left_id, p.right_id))
    return pairs


def estimate_true_duplicates(candidates: int, reviewed: int, confirmed: int) -> int:
    """Extrapolate the review sample's confirmation rate to all candidates."""
    if not 0 <= confirmed <= reviewed <= candidates or reviewed < 1:
        raise InvalidSample(
            f"need 0 <= confirmed ({confirmed}) <= reviewed ({reviewed})"
            f" <= candidates ({candidates}) and reviewed >= 1"
        )
    # integer arithmetic keeps the half-away-from-zero rounding exact
    return (2 * candidates * confirmed + reviewed) // (2 * reviewed)


def format_rate_percent(count: int, total: int) -> str:
    """Render count/total as a percentage at one significant digit ("0.009%");
    an exactly zero rate prints as "0.000%"."""
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    pct = 100.0 * count / total
    if pct == 0.0:
        return "0.000%"
    exponent = math.floor(math.log10(abs(pct)))
    leading = round_half_away(pct / 10.0**exponent)
    if leading == 10:
        leading = 1
        exponent += 1
    decimals = max(0, -exponent)
    return f"{leading * 10.0 ** exponent:.{decimals}f}%"


@dataclass(frozen=True)
class SplitLeakage:
    split: str
    size: int
    candidates: int
    reviewed: int
    confirmed: int
    estimated: int
    rate: float
    rate_percent: str
    flagged_for_exclusion: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "split": self.split,
            "size": self.size,
            "candidates": self.candidates,
            "reviewed": self.reviewed,
            "confirmed": self.confirmed,
            "estimated": self.estimated,
            "rate": self.rate,
            "rate_percent": self.rate_percent,
            "flagged_for_exclusion": list(self.flagged_for_exclusion),
        }


@dataclass(frozen=True)
class LeakageReport:
    splits: tuple[SplitLeakage, ...]

    def split(self, name: str) -> SplitLeakage:
        for entry in self.splits:
            if entry.split == name:
                return entry
        raise UnknownSplit(f"no split named {name!r} in this report")

    def as_dict(self) -> dict:
        return {"splits": [s.as_dict() for s in self.splits]}

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.as_dict(), indent=indent)


def leakage_report(
    candidates_by_split: Mapping[str, Sequence[CandidatePair]],
    split_sizes: Mapping[str, int],
    verdict_overrides: Mapping[tuple[str, str], Verdict] | None = None,
) -> LeakageReport:
    """Per-split duplicate accounting from candidate pairs and review verdicts.

    Reviewed = pairs with a non-pending verdict. When review is partial the
    estimated count extrapolates via estimate_true_duplicates; a full review
    reports the confirmed count. Confirmed pairs flag their augmentation-side
    (left) image for exclusion.
    """
    for split in candidates_by_split:
        if split not in split_sizes:
            raise UnknownSplit(f"split {split!r} has candidates but no declared size")
    for split, size in split_sizes.items():
        if size < 1:
            raise ValueError(f"split {split!r} must have a positive size, got {size}")

    entries = []
    for split in sorted(split_sizes):
        pairs = list(candidates_by_split.get(split, ()))
        if verdict_overrides:
            resolved = [
                verdict_overrides.get((p.left_id, p.right_id), p.verdict) for p in pairs
            ]
        else:
            resolved = [p.verdict for p in pairs]
        n_candidates = len(pairs)
        reviewed = sum(1 for v in resolved if v is not Verdict.PENDING)
        confirmed = sum(1 for v in resolved if v is Verdict.TRUE_DUPLICATE)
        if reviewed == 0:
            estimated = 0
        elif reviewed < n_candidates:
            estimated = estimate_true_duplicates(n_candidates, reviewed, confirmed)
        else:
            estimated = confirmed
        size = split_sizes[split]
        flagged = tuple(
            sorted(
                {
                    p.left_id
                    for p, v in zip(pairs, resolved)
                    if v is Verdict.TRUE_DUPLICATE
                }
            )
        )
        entries.append(
            SplitLeakage(
                split=split,
                size=size,
                candidates=n_candidates,
                reviewed=reviewed,
                confirmed=confirmed,
                estimated=estimated,
                rate=estimated / size,
                rate_percent=format_rate_percent(estimated, size),
                flagged_for_exclusion=flagged,
            )
        )
    return LeakageReport(splits=tuple(entries))


# -- hash cache file (JSON-lines: image_id, hex hash) ------------------------


def save_hashes(hashes: Mapping[str, int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(hashes):
            fh.write(json.dumps({"image_id": image_id, "hash": f"{hashes[image_id]:016x}"}) + "\n")


def load_hashes(path) -> dict[str, int]:
    hashes = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            hashes[obj["image_id"]] = int(obj["hash"], 16)
    return hashes
