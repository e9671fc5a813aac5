"""On-disk formats: tensor containers, activation datasets, label files, splits.

Every binary file starts with a 4-byte magic and a little-endian u32
version. Strings are u16 length + UTF-8 bytes. Floats are stored as
little-endian float32 and widened to float64 on load.

Tensor container (shared by model weights, SAE checkpoints and probe sets)::

    u32 count
    count x { str name, u8 ndim, u32 dims[ndim], f32 data[prod(dims)] }

See ``docs/formats.md`` for the per-file headers.
"""
from __future__ import annotations

import hashlib
import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, SizeError, SplitOverlapError

VERSION = 1
MAGIC_MODEL = b"BGPT"
MAGIC_SAE = b"BSAE"
MAGIC_PROBES = b"BPRB"
MAGIC_ACTIVATIONS = b"BACT"
MAGIC_LABELS = b"BLBL"


class Writer:
    def __init__(self):
        self.parts = []

    def raw(self, b: bytes):
        self.parts.append(b)

    def u8(self, v):
        self.raw(struct.pack("<B", v))

    def u16(self, v):
        self.raw(struct.pack("<H", v))

    def u32(self, v):
        self.raw(struct.pack("<I", v))

    def u64(self, v):
        self.raw(struct.pack("<Q", v))

    def f64(self, v):
        self.raw(struct.pack("<d", v))

    def str(self, s: str):
        b = s.encode("utf-8")
        if len(b) > 0xFFFF:
            # long strings (config echoes) use a u32 length escape
            self.u16(0xFFFF)
            self.u32(len(b))
        else:
            self.u16(len(b))
        self.raw(b)

    def header(self, magic: bytes):
        self.raw(magic)
        self.u32(VERSION)

    def array(self, a: np.ndarray, dtype: str):
        self.raw(np.ascontiguousarray(a, dtype=dtype).tobytes())

    def tensors(self, tensors: dict):
        self.u32(len(tensors))
        for name in sorted(tensors):
            t = np.asarray(tensors[name])
            self.str(name)
            self.u8(t.ndim)
            for d in t.shape:
                self.u32(d)
            self.array(t, "<f4")

    def getvalue(self) -> bytes:
        return b"".join(self.parts)

    def save(self, path):
        Path(path).write_bytes(self.getvalue())


class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file: need {n} bytes", self.pos)
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def _unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def u8(self):
        return self._unpack("<B")

    def u16(self):
        return self._unpack("<H")

    def u32(self):
        return self._unpack("<I")

    def u64(self):
        return self._unpack("<Q")

    def f64(self):
        return self._unpack("<d")

    def str(self) -> str:
        start = self.pos
        n = self.u16()
        if n == 0xFFFF:
            n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("invalid UTF-8 string", start) from None

    def header(self, magic: bytes):
        got = self.take(4)
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0)
        version = self.u32()
        if version != VERSION:
            raise FormatError(f"unsupported version {version}", 4)

    def array(self, count: int, dtype: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * itemsize), dtype=dtype).copy()

    def tensors(self) -> dict:
        out = {}
        for _ in range(self.u32()):
            name = self.str()
            shape = tuple(self.u32() for _ in range(self.u8()))
            out[name] = self.array(int(np.prod(shape)), "<f4").reshape(shape).astype(np.float64)
        return out

    def end(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes", self.pos)


def _read(path) -> Reader:
    return Reader(Path(path).read_bytes())


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- activations

@dataclass
class ActivationDataset:
    game: str
    model_hash: bytes  # 32-byte sha256 of the model weight file
    layer: int
    acts: np.ndarray          # (rows, n) float64 in memory
    provenance: np.ndarray    # (rows, 2) int64: game id, token position

    def __post_init__(self):
        self.acts = np.asarray(self.acts, dtype=np.float64)
        if self.acts.ndim != 2:
            raise ValueError("activations must be a (rows, n) matrix")
        self.provenance = np.asarray(self.provenance, dtype=np.int64).reshape(-1, 2)
        if len(self.model_hash) != 32:
            raise ValueError("model hash must be 32 bytes")
        if self.acts.shape[0] != self.provenance.shape[0]:
            raise ValueError("activation and provenance row counts differ")

    @property
    def n(self) -> int:
        return self.acts.shape[1]

    def __len__(self) -> int:
        return self.acts.shape[0]

    @property
    def game_ids(self) -> np.ndarray:
        return self.provenance[:, 0]

    def select_games(self, ids) -> np.ndarray:
        """Row mask for the given game ids."""
        return np.isin(self.game_ids, np.asarray(list(ids), dtype=np.int64))


def write_dataset(path, ds: ActivationDataset) -> None:
    w = Writer()
    w.header(MAGIC_ACTIVATIONS)
    w.str(ds.game)
    w.raw(ds.model_hash)
    w.u32(ds.layer)
    w.u32(ds.n)
    w.u64(len(ds))
    w.array(ds.acts, "<f4")
    w.array(ds.provenance, "<i8")
    w.save(path)


def read_dataset(path) -> ActivationDataset:
    r = _read(path)
    r.header(MAGIC_ACTIVATIONS)
    game = r.str()
    model_hash = r.take(32)
    layer, n, rows = r.u32(), r.u32(), r.u64()
    expected = rows * n * 4 + rows * 16
    if len(r.data) - r.pos != expected:
        raise FormatError(f"row count {rows} disagrees with payload size {len(r.data) - r.pos}", r.pos)
    acts = r.array(rows * n, "<f4").reshape(rows, n).astype(np.float64)
    prov = r.array(rows * 2, "<i8").reshape(rows, 2)
    r.end()
    return ActivationDataset(game, model_hash, layer, acts, prov)


# ---------------------------------------------------------------- labels

@dataclass
class LabelFile:
    game: str
    catalog: str
    catalog_hash: bytes
    labels: np.ndarray  # (rows, bits) uint8 0/1

    def __len__(self) -> int:
        return self.labels.shape[0]


def write_labels(path, lf: LabelFile) -> None:
    labels = np.asarray(lf.labels, dtype=np.uint8)
    w = Writer()
    w.header(MAGIC_LABELS)
    w.str(lf.game)
    w.str(lf.catalog)
    w.raw(lf.catalog_hash)
    w.u64(labels.shape[0])
    w.u32(labels.shape[1])
    w.raw(np.packbits(labels, axis=1, bitorder="little").tobytes())
    w.save(path)


def read_labels(path, expect_catalog_hash: Optional[bytes] = None) -> LabelFile:
    r = _read(path)
    r.header(MAGIC_LABELS)
    game, catalog = r.str(), r.str()
    hash_pos = r.pos
    chash = r.take(32)
    if expect_catalog_hash is not None and chash != expect_catalog_hash:
        raise FormatError("catalog hash does not match the expected catalog", hash_pos)
    rows, bits = r.u64(), r.u32()
    row_bytes = (bits + 7) // 8
    if len(r.data) - r.pos != rows * row_bytes:
        raise FormatError(f"row count {rows} disagrees with payload size", r.pos)
    packed = np.frombuffer(r.take(rows * row_bytes), dtype=np.uint8).reshape(rows, row_bytes)
    labels = np.unpackbits(packed, axis=1, count=bits, bitorder="little")
    return LabelFile(game, catalog, chash, labels)


# ---------------------------------------------------------------- model weights

def write_model_file(path, *, n_layers, n_heads, d_model, vocab, game, tensors) -> None:
    w = Writer()
    w.header(MAGIC_MODEL)
    w.u32(n_layers)
    w.u32(n_heads)
    w.u32(d_model)
    w.u32(len(vocab))
    for tok in vocab:
        w.str(tok)
    w.str(game)
    w.tensors(tensors)
    w.save(path)


def read_model_file(path) -> dict:
    r = _read(path)
    r.header(MAGIC_MODEL)
    out = {"n_layers": r.u32(), "n_heads": r.u32(), "d_model": r.u32()}
    out["vocab"] = [r.str() for _ in range(r.u32())]
    out["game"] = r.str()
    out["tensors"] = r.tensors()
    r.end()
    return out


# ---------------------------------------------------------------- SAE checkpoints

def write_sae_checkpoint(path, params, config: dict, step: int, p: float, lam: float) -> None:
    w = Writer()
    w.header(MAGIC_SAE)
    w.str(params.variant)
    w.u32(params.n)
    w.u32(params.m)
    w.str(json.dumps(config, sort_keys=True))
    w.u64(step)
    w.f64(p)
    w.f64(lam)
    w.tensors(params.tensors())
    w.save(path)


@dataclass
class SaeCheckpoint:
    params: object
    config: dict
    step: int
    p: float
    lam: float


def read_sae_checkpoint(path) -> SaeCheckpoint:
    from .sae.model import SaeParams

    r = _read(path)
    r.header(MAGIC_SAE)
    variant = r.str()
    n, m = r.u32(), r.u32()
    config = json.loads(r.str())
    step, p, lam = r.u64(), r.f64(), r.f64()
    tensors = r.tensors()
    r.end()
    params = SaeParams.from_tensors(variant, tensors)
    if params.n != n or params.m != m:
        raise FormatError("checkpoint header dims disagree with tensors")
    return SaeCheckpoint(params, config, step, p, lam)


# ---------------------------------------------------------------- probes

def write_probe_set(path, probes: list, catalog: str) -> None:
    w = Writer()
    w.header(MAGIC_PROBES)
    w.str(catalog)
    w.u32(len(probes))
    for pr in probes:
        w.u32(pr.bsp)
    w.tensors({"weights": np.stack([pr.weights for pr in probes]) if probes else np.zeros((0, 0)),
               "bias": np.array([pr.bias for pr in probes])})
    w.save(path)


def read_probe_set(path):
    from .probes import LinearProbe

    r = _read(path)
    r.header(MAGIC_PROBES)
    catalog = r.str()
    ids = [r.u32() for _ in range(r.u32())]
    t = r.tensors()
    r.end()
    return catalog, [LinearProbe(t["weights"][i], float(t["bias"][i]), bsp) for i, bsp in enumerate(ids)]


# ---------------------------------------------------------------- games and splits

def read_game_lines(path) -> list:
    return Path(path).read_text(encoding="utf-8").splitlines()


def write_game_lines(path, lines) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass
class SplitManifest:
    train: list
    test: list
    seed: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        check_disjoint(self.train, self.test)

    def to_json(self) -> str:
        return json.dumps({"train": self.train, "test": self.test, "seed": self.seed, **self.extra})

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        d = json.loads(text)
        return cls(list(d.pop("train")), list(d.pop("test")), int(d.pop("seed")), d)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls.from_json(Path(path).read_text())


def check_disjoint(train, test) -> None:
    overlap = set(train) & set(test)
    if overlap:
        raise SplitOverlapError(f"{len(overlap)} game ids appear in both train and test splits")


def split_games(game_ids, seed: int, sizes=(1000, 1000)) -> SplitManifest:
    """Seeded shuffle of ``game_ids`` (or a count), then the first ``sizes`` go to train and test."""
    ids = list(range(game_ids)) if isinstance(game_ids, int) else list(game_ids)
    n_train, n_test = sizes
    if n_train + n_test > len(ids):
        raise SizeError(f"need {n_train + n_test} games, corpus has {len(ids)}")
    random.Random(seed).shuffle(ids)
    return SplitManifest(sorted(ids[:n_train]), sorted(ids[n_train:n_train + n_test]), seed)
