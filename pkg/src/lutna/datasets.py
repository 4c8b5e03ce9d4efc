"""Dataset sources: synthetic generators, CSV rows and IDX image files."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str = ""

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.x) != len(self.y):
            raise DatasetFormatError(f"{len(self.x)} samples but {len(self.y)} labels")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise DatasetFormatError(f"label out of range [0, {self.n_classes})")

    def __len__(self):
        return len(self.y)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.x.shape[1:])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.n_classes, self.name)

    def split(self, val_fraction: float, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Deterministic shuffled train/validation split."""
        order = np.random.default_rng(seed).permutation(len(self))
        n_val = int(round(val_fraction * len(self)))
        return self.subset(np.sort(order[n_val:])), self.subset(np.sort(order[:n_val]))


@dataclass(frozen=True)
class DatasetSource:
    kind: str
    generator: str = ""
    seed: int = 0
    size: int = 0
    paths: tuple[str, ...] = ()
    n_classes: int | None = None
    header: bool = False

    @classmethod
    def parse(cls, text: str) -> "DatasetSource":
        """``synthetic:<generator>[:seed=S][:n=N][:classes=K]``,
        ``csv:<path>[:header=1][:classes=K]``, ``idx:<images>,<labels>[:classes=K]``."""
        kind, _, rest = text.partition(":")
        parts = rest.split(":") if rest else []
        opts = {}
        positional = []
        for p in parts:
            if "=" in p:
                k, v = p.split("=", 1)
                opts[k] = v
            else:
                positional.append(p)
        classes = int(opts["classes"]) if "classes" in opts else None
        if kind == "synthetic":
            if not positional:
                raise DatasetFormatError("synthetic source needs a generator id")
            return cls("synthetic", positional[0], int(opts.get("seed", 0)), int(opts.get("n", 600)),
                       n_classes=classes)
        if kind == "csv":
            return cls("csv_rows", paths=(positional[0],), n_classes=classes,
                       header=opts.get("header", "0") in ("1", "true"))
        if kind == "idx":
            paths = tuple(positional[0].split(","))
            if len(paths) != 2:
                raise DatasetFormatError("idx source needs '<images>,<labels>'")
            return cls("idx_images", paths=paths, n_classes=classes)
        raise DatasetFormatError(f"unknown dataset kind {kind!r}")


# ------------------------------------------------------------- synthetic


def two_gaussians(rng: np.random.Generator, n: int, n_classes: int = 2) -> Dataset:
    y = np.arange(n) % 2
    centers = np.array([[-1.0, -1.0], [1.0, 1.0]])
    x = centers[y] + 0.6 * rng.standard_normal((n, 2))
    return Dataset(x, y, 2, "two_gaussians")


def blobs(rng: np.random.Generator, n: int, n_classes: int = 4, dim: int = 8) -> Dataset:
    centers = rng.normal(0.0, 2.0, size=(n_classes, dim))
    y = np.arange(n) % n_classes
    x = centers[y] + rng.standard_normal((n, dim))
    return Dataset(x, y, n_classes, "blobs")


def _templates(size: int = 8) -> np.ndarray:
    t = np.zeros((6, size, size))
    mid = size // 2
    t[0, mid - 1:mid + 1, 1:-1] = 1.0                      # horizontal bar
    t[1, 1:-1, mid - 1:mid + 1] = 1.0                      # vertical bar
    np.fill_diagonal(t[2], 1.0)                            # diagonal
    t[2] = np.maximum(t[2], np.roll(t[2], 1, axis=1))
    t[3] = np.fliplr(t[2])                                 # anti-diagonal
    t[4, 1:-1, 1] = t[4, 1:-1, -2] = t[4, 1, 1:-1] = t[4, -2, 1:-1] = 1.0  # square outline
    t[5, mid - 2:mid + 2, mid - 2:mid + 2] = 1.0           # filled block
    return t


def patterns(rng: np.random.Generator, n: int, n_classes: int = 4, size: int = 8) -> Dataset:
    """Noisy 1 x 8 x 8 glyphs (bars, diagonals, squares) with random shifts."""
    if not 2 <= n_classes <= 6:
        raise ValueError("patterns supports 2..6 classes")
    t = _templates(size)
    y = np.arange(n) % n_classes
    shifts = rng.integers(-1, 2, size=(n, 2))
    x = np.empty((n, 1, size, size))
    for i in range(n):
        img = np.roll(t[y[i]], tuple(shifts[i]), axis=(0, 1))
        x[i, 0] = np.clip(img * rng.uniform(0.6, 1.0) + 0.25 * rng.standard_normal((size, size)), 0.0, 1.0)
    return Dataset(x, y, n_classes, "patterns")


GENERATORS = {"two_gaussians": two_gaussians, "blobs": blobs, "patterns": patterns}


def synthetic(generator: str, seed: int, size: int, n_classes: int | None = None) -> Dataset:
    if generator not in GENERATORS:
        raise DatasetFormatError(f"unknown generator {generator!r}; have {sorted(GENERATORS)}")
    rng = np.random.default_rng(seed)
    kwargs = {} if n_classes is None else {"n_classes": n_classes}
    return GENERATORS[generator](rng, size, **kwargs)


# ------------------------------------------------------------- files


def read_csv_rows(path, header: bool = False, n_classes: int | None = None) -> Dataset:
    """Rows of numeric features with an integer label in the last column."""
    feats, labels = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if header and i == 0:
                continue
            if not row:
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DatasetFormatError(f"{path}: non-numeric cell in row {i}") from None
            if len(vals) < 2:
                raise DatasetFormatError(f"{path}: row {i} needs features and a label")
            if feats and len(vals) - 1 != len(feats[0]):
                raise DatasetFormatError(f"{path}: row {i} has {len(vals) - 1} features, expected {len(feats[0])}")
            if vals[-1] != int(vals[-1]):
                raise DatasetFormatError(f"{path}: row {i} label {vals[-1]} is not an integer")
            feats.append(vals[:-1])
            labels.append(int(vals[-1]))
    if not labels:
        raise DatasetFormatError(f"{path}: no rows")
    y = np.array(labels, dtype=np.int64)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    if y.min() < 0 or y.max() >= k:
        bad = int(np.flatnonzero((y < 0) | (y >= k))[0])
        raise DatasetFormatError(f"{path}: label out of range in row {bad + int(header)}")
    return Dataset(np.array(feats), y, k, Path(path).stem)


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path) -> np.ndarray:
    """IDX container (big-endian by that format's definition)."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[0] != 0 or data[1] != 0 or data[2] not in _IDX_TYPES:
        raise DatasetFormatError(f"{path}: bad IDX magic number")
    ndim = data[3]
    hdr = 4 + 4 * ndim
    if len(data) < hdr:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:hdr])
    dtype = np.dtype(_IDX_TYPES[data[2]])
    count = int(np.prod(dims)) if dims else 0
    if len(data) - hdr != count * dtype.itemsize:
        raise DatasetFormatError(f"{path}: payload size does not match dimensions {dims}")
    return np.frombuffer(data, dtype=dtype, offset=hdr).reshape(dims)


def write_idx(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = {np.dtype("uint8"): 0x08, np.dtype("int8"): 0x09}.get(arr.dtype)
    if code is None:
        raise ValueError("write_idx supports uint8/int8 arrays")
    head = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(head + arr.tobytes())


def read_idx_images(images, labels, n_classes: int | None = None) -> Dataset:
    raw = read_idx(images)
    y = read_idx(labels).astype(np.int64)
    if y.ndim != 1 or len(y) != len(raw):
        raise DatasetFormatError("IDX labels must be 1-D and match the image count")
    x = raw.astype(np.float64)
    if raw.dtype == np.uint8:
        x /= 255.0
    if x.ndim == 3:
        x = x[:, None]
    k = n_classes if n_classes is not None else int(y.max()) + 1
    return Dataset(x, y, k, Path(images).stem)


def load_dataset(source: DatasetSource | str) -> Dataset:
    if isinstance(source, str):
        source = DatasetSource.parse(source)
    if source.kind == "synthetic":
        return synthetic(source.generator, source.seed, source.size, source.n_classes)
    if source.kind == "csv_rows":
        return read_csv_rows(source.paths[0], source.header, source.n_classes)
    if source.kind == "idx_images":
        return read_idx_images(source.paths[0], source.paths[1], source.n_classes)
    raise DatasetFormatError(f"unknown dataset kind {source.kind!r}")
