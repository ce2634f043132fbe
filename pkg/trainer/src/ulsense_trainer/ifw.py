"""Reader/writer for the .ifw weight-bundle format.

Mirrors docs/formats.md from the main repository byte for byte; bundles
written here must load unchanged in the runtime engine and vice versa.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"IFW1"
VERSION = 1
HEADER = struct.Struct("<4sIIIIIII")

TENSOR_ORDER = (
    "conv1a.weight", "conv1a.bias", "conv1b.weight", "conv1b.bias",
    "conv2a.weight", "conv2a.bias", "conv2b.weight", "conv2b.bias",
    "dense.weight", "dense.bias",
)


class IfwError(ValueError):
    pass


@dataclass
class Bundle:
    alpha: int
    beta: int
    n_classes: int
    grid: tuple
    norm_mean: np.ndarray
    norm_std: np.ndarray
    tensors: dict
    meta: dict = field(default_factory=dict)
    n_scalars: int = 7

    def flatten_size(self) -> int:
        h, w = self.grid
        return self.beta * (h // 2 // 2) * (w // 2 // 2)

    def validate(self):
        if not (self.norm_std > 0).all():
            raise IfwError("normalization std must be positive")
        expected = {
            "conv1a.weight": (self.alpha, 2, 3, 3),
            "conv1a.bias": (self.alpha,),
            "conv1b.weight": (self.alpha, self.alpha, 3, 3),
            "conv1b.bias": (self.alpha,),
            "conv2a.weight": (self.beta, self.alpha, 3, 3),
            "conv2a.bias": (self.beta,),
            "conv2b.weight": (self.beta, self.beta, 3, 3),
            "conv2b.bias": (self.beta,),
            "dense.weight": (self.n_classes,
                             self.flatten_size() + self.n_scalars),
            "dense.bias": (self.n_classes,),
        }
        for name in TENSOR_ORDER:
            if name not in self.tensors:
                raise IfwError(f"missing tensor {name}")
            if tuple(self.tensors[name].shape) != expected[name]:
                raise IfwError(
                    f"tensor {name}: {self.tensors[name].shape} != "
                    f"{expected[name]}")


def save(bundle: Bundle, path):
    bundle.validate()
    meta_bytes = json.dumps(bundle.meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, bundle.alpha, bundle.beta,
                            bundle.n_scalars, bundle.n_classes,
                            bundle.grid[0], bundle.grid[1]))
        norm = np.empty(2 * bundle.n_scalars, dtype="<f4")
        norm[0::2] = bundle.norm_mean
        norm[1::2] = bundle.norm_std
        f.write(norm.tobytes())
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(TENSOR_ORDER)))
        for name in TENSOR_ORDER:
            t = np.ascontiguousarray(bundle.tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(t.tobytes())


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise IfwError(f"truncated file while reading {what}")
    return buf


def load(path) -> Bundle:
    with open(path, "rb") as f:
        magic, version, alpha, beta, n_scalars, n_classes, sym, sc = \
            HEADER.unpack(_read_exact(f, HEADER.size, "header"))
        if magic != MAGIC:
            raise IfwError(f"bad magic {magic!r}")
        if version != VERSION:
            raise IfwError(f"unsupported version {version}")
        norm = np.frombuffer(_read_exact(f, 8 * n_scalars, "norm"),
                             dtype="<f4")
        meta_len, = struct.unpack("<I", _read_exact(f, 4, "meta length"))
        meta = json.loads(_read_exact(f, meta_len, "meta") or b"{}")
        count, = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            name_len, = struct.unpack("<H", _read_exact(f, 2, "name"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            rank, = struct.unpack("<I", _read_exact(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}I",
                                 _read_exact(f, 4 * rank, "dims"))
            n_items = int(np.prod(dims)) if rank else 1
            tensors[name] = np.array(
                np.frombuffer(_read_exact(f, 4 * n_items, name),
                              dtype="<f4").reshape(dims), dtype=np.float32)
    bundle = Bundle(alpha=alpha, beta=beta, n_classes=n_classes,
                    grid=(sym, sc), norm_mean=norm[0::2].copy(),
                    norm_std=norm[1::2].copy(), tensors=tensors, meta=meta,
                    n_scalars=n_scalars)
    bundle.validate()
    return bundle
