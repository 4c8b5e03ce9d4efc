"""Model, histogram and dataset persistence.

A model is a JSON manifest ``<name>.json`` plus one raw blob ``<name>.bin``.
Blob layout (all integers little-endian, tensors back to back in layer order):

* weights: one word per weight, ``sign << (bits - 1) | magnitude``; 16-bit
  words, or 32-bit words when the weight magnitude itself is 16 bits wide
* mask: ``numpy.packbits`` of the flattened mask, little bit order
* bias: ``int64``
* real weight / real bias (optional): ``float64``

The manifest records each tensor's offset, length, dtype and shape, plus the
blob size and SHA-256.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from lutna.datasets import Dataset, DatasetSource, load_dataset  # noqa: F401  (re-export)
from lutna.fixedpoint import QuantParams
from lutna.lutcore import parse_config
from lutna.netsim import ActivationHistogram, QLayer, QuantModel

FORMAT = "lutna-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


class VersionError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class TruncatedBlobError(ModelFormatError):
    pass


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bin")


def _word_dtype(n_bits: int) -> np.dtype:
    return np.dtype("<u4") if n_bits >= 16 else np.dtype("<u2")


def pack_weights(codes: np.ndarray, n_bits: int) -> bytes:
    dt = _word_dtype(n_bits)
    top = dt.itemsize * 8 - 1
    sign = (codes < 0).astype(np.uint64)
    words = (sign << np.uint64(top)) | np.abs(codes).astype(np.uint64)
    return words.astype(dt).tobytes()


def unpack_weights(raw: bytes, n_bits: int, shape) -> np.ndarray:
    dt = _word_dtype(n_bits)
    top = dt.itemsize * 8 - 1
    words = np.frombuffer(raw, dtype=dt).astype(np.int64)
    mag = words & ((1 << top) - 1)
    return np.where(words >> top, -mag, mag).reshape(shape)


class _BlobWriter:
    def __init__(self):
        self.buf = bytearray()

    def add(self, name: str, raw: bytes, dtype: str, shape) -> dict:
        entry = {"name": name, "offset": len(self.buf), "length": len(raw), "dtype": dtype,
                 "shape": [int(s) for s in shape]}
        self.buf += raw
        return entry


def _params(p: QuantParams | None):
    return None if p is None else {"n_bits": p.n_bits, "scale": p.scale}


def _unparams(d) -> QuantParams | None:
    return None if d is None else QuantParams(int(d["n_bits"]), float(d["scale"]))


def _encode_layers(layers: list[QLayer], blob: _BlobWriter, prefix: str) -> list[dict]:
    out = []
    for i, q in enumerate(layers):
        name = f"{prefix}{i}"
        entry: dict = {"kind": q.kind}
        if q.is_compute:
            wb = q.weight_params.n_bits
            tensors = [
                blob.add(f"{name}.weight", pack_weights(q.weight, wb), _word_dtype(wb).str, q.weight.shape),
                blob.add(f"{name}.mask", np.packbits(q.mask.ravel(), bitorder="little").tobytes(), "bits",
                         q.mask.shape),
                blob.add(f"{name}.bias", q.bias.astype("<i8").tobytes(), "<i8", q.bias.shape),
            ]
            if q.real_weight is not None:
                tensors.append(blob.add(f"{name}.real_weight", q.real_weight.astype("<f8").tobytes(), "<f8",
                                        q.real_weight.shape))
                tensors.append(blob.add(f"{name}.real_bias", q.real_bias.astype("<f8").tobytes(), "<f8",
                                        q.real_bias.shape))
            entry.update(
                shape=list(q.weight.shape), weight_params=_params(q.weight_params),
                out_params=_params(q.out_params), config=q.config.label if q.config else None,
                k=q.k, pad=q.pad, tensors=tensors,
            )
        elif q.kind == "residual":
            entry.update(out_params=_params(q.out_params), body=_encode_layers(q.body, blob, name + "."))
        elif q.kind in ("maxpool", "avgpool"):
            entry["k"] = q.k
        out.append(entry)
    return out


def save_model(model: QuantModel, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` and ``<path>.bin``; returns both paths."""
    mpath, bpath = _paths(path)
    blob = _BlobWriter()
    layers = _encode_layers(model.layers, blob, "L")
    data = bytes(blob.buf)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "input_shape": list(model.input_shape),
        "input_params": _params(model.input_params),
        "n_classes": model.n_classes,
        "meta": model.meta,
        "sparsity": model.sparsity(),
        "mac_counts": model.mac_counts(),
        "blob": {"file": bpath.name, "size": len(data), "sha256": hashlib.sha256(data).hexdigest()},
        "layers": layers,
    }
    mpath.parent.mkdir(parents=True, exist_ok=True)
    bpath.write_bytes(data)
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return mpath, bpath


def _tensor(data: bytes, t: dict, seen: list) -> bytes:
    lo, hi = t["offset"], t["offset"] + t["length"]
    if lo < 0 or hi > len(data):
        raise TruncatedBlobError(f"tensor {t['name']} spans [{lo}, {hi}) beyond blob of {len(data)} bytes")
    for a, b in seen:
        if lo < b and a < hi:
            raise ModelFormatError(f"tensor {t['name']} overlaps another tensor")
    seen.append((lo, hi))
    return data[lo:hi]


def _decode_layers(entries: list[dict], data: bytes, seen: list) -> list[QLayer]:
    out = []
    for e in entries:
        kind = e["kind"]
        if kind in ("dense", "conv2d"):
            wp = _unparams(e["weight_params"])
            tensors = {t["name"].rsplit(".", 1)[1]: t for t in e["tensors"]}
            shape = tuple(e["shape"])
            weight = unpack_weights(_tensor(data, tensors["weight"], seen), wp.n_bits, shape)
            size = int(np.prod(shape))
            mask = np.unpackbits(np.frombuffer(_tensor(data, tensors["mask"], seen), np.uint8),
                                 count=size, bitorder="little").astype(bool).reshape(shape)
            bias = np.frombuffer(_tensor(data, tensors["bias"], seen), "<i8").astype(np.int64)
            q = QLayer(kind, weight=weight, weight_params=wp, bias=bias, mask=mask,
                       out_params=_unparams(e["out_params"]),
                       config=parse_config(e["config"]) if e["config"] else None, k=e["k"], pad=e["pad"])
            if "real_weight" in tensors:
                q.real_weight = np.frombuffer(_tensor(data, tensors["real_weight"], seen), "<f8").reshape(shape).copy()
                q.real_bias = np.frombuffer(_tensor(data, tensors["real_bias"], seen), "<f8").copy()
            if (weight[~mask] != 0).any():
                raise ModelFormatError("pruned weight with non-zero magnitude")
        elif kind == "residual":
            q = QLayer(kind, out_params=_unparams(e["out_params"]), body=_decode_layers(e["body"], data, seen))
        else:
            q = QLayer(kind, k=e.get("k", 0))
        out.append(q)
    return out


def load_model(path) -> QuantModel:
    mpath, _ = _paths(path)
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{mpath}: manifest is not valid JSON ({exc.msg})") from None
    if manifest.get("format") != FORMAT:
        raise ModelFormatError(f"{mpath}: not a {FORMAT} manifest")
    if manifest.get("version") != VERSION:
        raise VersionError(f"{mpath}: unsupported format version {manifest.get('version')!r}, expected {VERSION}")
    info = manifest["blob"]
    data = (mpath.parent / info["file"]).read_bytes()
    if len(data) < info["size"]:
        raise TruncatedBlobError(f"blob has {len(data)} bytes, manifest expects {info['size']}")
    if len(data) > info["size"]:
        raise ModelFormatError(f"blob has {len(data)} bytes, manifest expects {info['size']}")
    if hashlib.sha256(data).hexdigest() != info["sha256"]:
        raise ChecksumError(f"{info['file']}: SHA-256 mismatch")
    layers = _decode_layers(manifest["layers"], data, [])
    return QuantModel(layers, tuple(manifest["input_shape"]), _unparams(manifest["input_params"]),
                      int(manifest["n_classes"]), dict(manifest.get("meta", {})))


# ------------------------------------------------------------- histograms

HISTOGRAM_HEADER = ("code", "count")


def histogram_csv(hist: ActivationHistogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTOGRAM_HEADER)
    for code, count in enumerate(hist.counts):
        w.writerow((code, int(count)))
    return buf.getvalue()


def save_histogram(hist: ActivationHistogram, path) -> None:
    Path(path).write_text(histogram_csv(hist))


def load_histogram(path) -> ActivationHistogram:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HISTOGRAM_HEADER:
        raise ModelFormatError(f"{path}: expected header {','.join(HISTOGRAM_HEADER)}")
    counts = [int(r[1]) for r in rows[1:]]
    if [int(r[0]) for r in rows[1:]] != list(range(len(counts))):
        raise ModelFormatError(f"{path}: codes must run 0..N-1 in order")
    n_bits = max(len(counts) - 1, 1).bit_length()
    if len(counts) != 1 << n_bits:
        raise ModelFormatError(f"{path}: {len(counts)} bins is not a power of two")
    return ActivationHistogram(n_bits, np.array(counts, dtype=np.int64))
