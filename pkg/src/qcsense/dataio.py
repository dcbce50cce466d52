"""Synthetic LIDAR quartile data, preprocessing, subset draws and CSV storage.

The synthetic generator stands in for canopy LIDAR data: each sample is a
return-energy profile over height (a ground return plus zero to two canopy
lobes) summarized by the heights at which the cumulative energy reaches 25%,
50%, 75% and 98%, followed by the total canopy height.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

log = logging.getLogger(__name__)

N_PIXELS = 5
TRAIN_FRACTION = 0.7
MIN_NONZERO = 10
SIDECAR_KEYS = ("seed", "min", "max", "train_indices", "test_indices")


@dataclass(frozen=True)
class LidarConfig:
    """Knobs of the synthetic return-energy profiles (heights in metres)."""

    max_height: float = 40.0
    grid_points: int = 400
    ground_width: float = 0.4
    ground_weight: float = 1.0
    max_lobes: int = 2
    lobe_center: tuple[float, float] = (3.0, 30.0)
    lobe_width: tuple[float, float] = (0.7, 4.0)
    lobe_weight: tuple[float, float] = (0.3, 3.0)
    quantiles: tuple[float, ...] = (0.25, 0.5, 0.75, 0.98)
    top_threshold: float = 0.01
    zero_fraction: float = 0.05


def _profiles(n: int, cfg: LidarConfig, rng: np.random.Generator) -> np.ndarray:
    z = np.linspace(0.0, cfg.max_height, cfg.grid_points)
    ground = rng.uniform(0.0, 1.0, n)
    energy = cfg.ground_weight * np.exp(-0.5 * ((z - ground[:, None]) / cfg.ground_width) ** 2)
    n_lobes = rng.integers(0, cfg.max_lobes + 1, n)
    for k in range(cfg.max_lobes):
        center = rng.uniform(*cfg.lobe_center, n)
        width = rng.uniform(*cfg.lobe_width, n)
        weight = rng.uniform(*cfg.lobe_weight, n) * (n_lobes > k)
        energy += weight[:, None] * np.exp(-0.5 * ((z - center[:, None]) / width[:, None]) ** 2)
    return z, ground, energy


def generate_synthetic_lidar(
    n_samples: int, seed: int, config: Optional[LidarConfig] = None, chunk: int = 8192
) -> np.ndarray:
    """Raw (unnormalized) samples of shape (n_samples, 5), rows non-decreasing.

    A fraction ``config.zero_fraction`` of rows is replaced by all-zero
    samples, mimicking failed returns that preprocessing must remove.
    """
    cfg = config or LidarConfig()
    if int(n_samples) < 1:
        raise ValueError("n_samples must be >= 1")
    if not 0.0 <= cfg.zero_fraction <= 1.0:
        raise ValueError("zero_fraction must lie in [0, 1]")
    n_samples = int(n_samples)
    rng = np.random.default_rng(seed)
    out = np.empty((n_samples, N_PIXELS))
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        z, ground, energy = _profiles(m, cfg, rng)
        cum = np.cumsum(energy, axis=1)
        cum /= cum[:, -1:]
        heights = [z[np.argmax(cum >= q, axis=1)] for q in cfg.quantiles]
        above = energy >= cfg.top_threshold * energy.max(axis=1, keepdims=True)
        top = z[cfg.grid_points - 1 - np.argmax(above[:, ::-1], axis=1)]
        heights.append(np.maximum(top, heights[-1]))
        block = np.stack(heights, axis=1) - ground[:, None]
        out[start:start + m] = np.maximum.accumulate(np.clip(block, 0.0, None), axis=1)
    zero = rng.random(n_samples) < cfg.zero_fraction
    out[zero] = 0.0
    return out


@dataclass
class Dataset:
    """Normalized samples with the split and the constants needed to undo scaling."""

    samples: np.ndarray
    train_indices: np.ndarray
    test_indices: np.ndarray
    min: Union[float, np.ndarray]
    max: Union[float, np.ndarray]
    seed: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.train_indices = np.asarray(self.train_indices, dtype=np.int64)
        self.test_indices = np.asarray(self.test_indices, dtype=np.int64)
        n = self.samples.shape[0]
        both = np.concatenate([self.train_indices, self.test_indices])
        if self.samples.ndim != 2 or both.size != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise ValueError("train/test indices must partition the samples")
        if np.any(self.samples < 0) or np.any(self.samples > 1):
            raise ValueError("normalized samples must lie in [0, 1]")

    @property
    def n_pixels(self) -> int:
        return self.samples.shape[1]

    @property
    def train(self) -> np.ndarray:
        return self.samples[self.train_indices]

    @property
    def test(self) -> np.ndarray:
        return self.samples[self.test_indices]

    def denormalize(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        values = self.samples if values is None else np.asarray(values, dtype=float)
        lo, hi = np.asarray(self.min), np.asarray(self.max)
        return values * (hi - lo) + lo

    def metadata(self) -> dict:
        def plain(x):
            return np.asarray(x).tolist()

        return {
            "seed": int(self.seed),
            "min": plain(self.min),
            "max": plain(self.max),
            "train_indices": plain(self.train_indices),
            "test_indices": plain(self.test_indices),
        }


def split_sizes(n: int) -> tuple[int, int]:
    n_train = int(math.floor(TRAIN_FRACTION * n + 0.5))
    return n_train, n - n_train


def preprocess(raw, seed: int, per_pixel: bool = False) -> Dataset:
    """Drop all-zero rows, min-max normalize and make a shuffled 70/30 split.

    Normalization uses one global min/max unless ``per_pixel`` is set.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] < 1:
        raise ValueError("raw samples must be a 2-D array")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw samples must be finite")
    kept = raw[np.any(raw != 0, axis=1)]
    if kept.shape[0] < MIN_NONZERO:
        raise ValueError(
            f"need at least {MIN_NONZERO} non-zero samples, got {kept.shape[0]}"
        )
    if per_pixel:
        lo, hi = kept.min(axis=0), kept.max(axis=0)
        if np.any(hi == lo):
            raise ValueError("a pixel is constant; per-pixel normalization is undefined")
    else:
        lo, hi = float(kept.min()), float(kept.max())
        if hi == lo:
            raise ValueError("all pixel values are equal; normalization is undefined")
    samples = np.clip((kept - lo) / (hi - lo), 0.0, 1.0)
    n_train, _ = split_sizes(kept.shape[0])
    perm = np.random.default_rng(seed).permutation(kept.shape[0])
    return Dataset(samples, perm[:n_train], perm[n_train:], lo, hi, int(seed))


def sample_subsets(source, size: int, repeats: int, seed: int) -> tuple[list[np.ndarray], int]:
    """``repeats`` disjoint uniform subsets of the training samples.

    ``source`` is a Dataset (its train split is used) or an array of samples.
    When the pool cannot supply that many disjoint subsets, the number is
    reduced to the feasible maximum and a warning is issued.  Returns the
    subsets and the number actually drawn.
    """
    pool = source.train if isinstance(source, Dataset) else np.asarray(source, dtype=float)
    size, repeats = int(size), int(repeats)
    if size < 1 or repeats < 1:
        raise ValueError("size and repeats must be >= 1")
    feasible = pool.shape[0] // size
    if feasible == 0:
        raise ValueError(f"cannot draw a subset of {size} from {pool.shape[0]} samples")
    used = min(repeats, feasible)
    if used < repeats:
        msg = f"only {used} disjoint subsets of size {size} fit in {pool.shape[0]} samples (asked {repeats})"
        log.warning(msg)
        warnings.warn(msg, stacklevel=2)
    perm = np.random.default_rng(seed).permutation(pool.shape[0])
    return [pool[perm[r * size:(r + 1) * size]] for r in range(used)], used


# --------------------------------------------------------------------------
# CSV

class CsvSchemaError(ValueError):
    """A CSV file does not follow the pixel schema; message names the line."""


def header_for(n_pixels: int) -> list[str]:
    return [f"pixel_{i}" for i in range(n_pixels)]


def write_csv(path, samples, banner: Optional[str] = None) -> None:
    samples = np.asarray(samples, dtype=float)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if banner:
            fh.write(f"# {banner}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header_for(samples.shape[1]))
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path, n_pixels: Optional[int] = N_PIXELS) -> np.ndarray:
    """Parse a pixel CSV; lines starting with '#' are comments."""
    path = Path(path)
    rows, header, width = [], None, None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = [c.strip() for c in cells]
                width = len(header) if n_pixels is None else n_pixels
                if header != header_for(width):
                    raise CsvSchemaError(
                        f"{path}:{lineno}: header must be {','.join(header_for(width))}, got {','.join(header)}"
                    )
                continue
            if len(cells) != width:
                raise CsvSchemaError(f"{path}:{lineno}: expected {width} pixels, got {len(cells)}")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise CsvSchemaError(f"{path}:{lineno}: non-numeric cell in {cells}") from None
            if not all(math.isfinite(v) for v in values):
                raise CsvSchemaError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if header is None:
        raise CsvSchemaError(f"{path}: missing header")
    return np.array(rows, dtype=float).reshape(len(rows), width)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_csv(dataset: Dataset, path, banner: Optional[str] = None) -> tuple[Path, Path]:
    """Write normalized samples plus the JSON sidecar; returns both paths."""
    path = Path(path)
    write_csv(path, dataset.samples, banner)
    meta = sidecar_path(path)
    meta.write_text(json.dumps(dataset.metadata(), indent=1) + "\n", encoding="utf-8")
    return path, meta


def load_csv(path) -> Dataset:
    """Read a dataset written by :func:`save_csv` (sidecar required)."""
    samples = read_csv(path, n_pixels=None)
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise FileNotFoundError(f"missing metadata sidecar {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    missing = [k for k in SIDECAR_KEYS if k not in meta]
    if missing:
        raise CsvSchemaError(f"{meta_path}: missing keys {missing}")

    def scalar_or_array(x):
        return float(x) if np.isscalar(x) else np.asarray(x, dtype=float)

    return Dataset(samples, meta["train_indices"], meta["test_indices"],
                   scalar_or_array(meta["min"]), scalar_or_array(meta["max"]), int(meta["seed"]))


def load_any(path, seed: int) -> Dataset:
    """A saved dataset if its sidecar exists, otherwise raw samples preprocessed with ``seed``."""
    if sidecar_path(path).exists():
        return load_csv(path)
    return preprocess(read_csv(path, n_pixels=None), seed)
