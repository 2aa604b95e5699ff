"""Binary container for model weights and architecture config.

A checkpoint couples a :class:`ModelConfig` with a name-keyed set of float32
tensors. The on-disk layout (all little-endian):

    magic "TCKP" | version 0x01
    5 x u32     : n_layers, n_heads, d_model, vocab_size, max_seq_len
    u32         : tensor count
    per tensor  : u16 name length | name bytes (UTF-8) | u8 rank |
                  rank x u32 dims | u64 offset into data section
    u64         : data section byte length
    raw float32 data

Tensors are written sorted by name and their data offsets are ascending and
contiguous, so serialization is a pure function of the checkpoint value:
writing the same checkpoint twice yields byte-identical files.

Reading is safe to do concurrently on one file; a checkpoint value is never
mutated after construction. Writes to a given path are single-writer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

MAGIC = b"TCKP"
VERSION = 1

# Suffixes of the tensors each transformer block owns. The full tensor name
# is "layers.<index>.<suffix>", so the layer index is recoverable from the
# name alone (the truncation step relies on this).
LAYER_SUFFIXES = (
    "ln1.gamma",
    "ln1.beta",
    "attn.w_qkv",
    "attn.b_qkv",
    "attn.w_out",
    "attn.b_out",
    "ln2.gamma",
    "ln2.beta",
    "mlp.w_in",
    "mlp.b_in",
    "mlp.w_out",
    "mlp.b_out",
)


class CheckpointFormatError(Exception):
    """A checkpoint file does not conform to the container layout."""


class BadMagicError(CheckpointFormatError):
    pass


class TruncatedFileError(CheckpointFormatError):
    pass


class ShapeMismatchError(CheckpointFormatError):
    """Declared shapes, offsets, and data section length disagree."""


class DuplicateTensorError(CheckpointFormatError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    n_heads: int
    d_model: int
    vocab_size: int
    max_seq_len: int

    def validate(self) -> None:
        for field in ("n_layers", "n_heads", "d_model", "vocab_size", "max_seq_len"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1, got {getattr(self, field)}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )

    def with_layers(self, n_layers: int) -> "ModelConfig":
        return replace(self, n_layers=n_layers)


@dataclass
class Checkpoint:
    """Architecture config plus float32 tensors keyed by name."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        if self.config != other.config:
            return False
        if self.tensors.keys() != other.tensors.keys():
            return False
        return all(
            a.shape == other.tensors[name].shape
            and np.array_equal(a, other.tensors[name])
            for name, a in self.tensors.items()
        )


def layer_tensor_name(layer: int, suffix: str) -> str:
    return f"layers.{layer}.{suffix}"


def required_tensor_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Tensor names and shapes a complete checkpoint must contain."""
    d, v, s = config.d_model, config.vocab_size, config.max_seq_len
    hidden = 4 * d
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (v, d),
        "pos_emb": (s, d),
    }
    per_layer = {
        "ln1.gamma": (d,),
        "ln1.beta": (d,),
        "attn.w_qkv": (d, 3 * d),
        "attn.b_qkv": (3 * d,),
        "attn.w_out": (d, d),
        "attn.b_out": (d,),
        "ln2.gamma": (d,),
        "ln2.beta": (d,),
        "mlp.w_in": (d, hidden),
        "mlp.b_in": (hidden,),
        "mlp.w_out": (hidden, d),
        "mlp.b_out": (d,),
    }
    for i in range(config.n_layers):
        for suffix, shape in per_layer.items():
            shapes[layer_tensor_name(i, suffix)] = shape
    shapes["ln_f.gamma"] = (d,)
    shapes["ln_f.beta"] = (d,)
    shapes["lm_head"] = (d, v)
    return shapes


def _check_structural(ckpt: Checkpoint) -> None:
    """Reject tensors the container cannot represent faithfully."""
    ckpt.config.validate()
    for name, arr in ckpt.tensors.items():
        if not name:
            raise ValueError("tensor names must be non-empty")
        if len(name.encode("utf-8")) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        if arr.dtype != np.float32:
            raise ValueError(f"tensor {name!r} must be float32, got {arr.dtype}")
        if arr.ndim == 0 or arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} has unsupported rank {arr.ndim}")
        if any(dim < 1 for dim in arr.shape):
            raise ValueError(f"tensor {name!r} has non-positive dimension: {arr.shape}")


def validate_against_config(ckpt: Checkpoint) -> list[str]:
    """List every way the tensor set disagrees with the config.

    Empty means the checkpoint holds exactly the tensors its config requires,
    each with the required shape. Violations are returned as data rather than
    raised so callers can report all of them at once.
    """
    required = required_tensor_shapes(ckpt.config)
    violations = []
    for name in sorted(required.keys() - ckpt.tensors.keys()):
        violations.append(f"missing tensor: {name}")
    for name in sorted(ckpt.tensors.keys() - required.keys()):
        violations.append(f"unexpected tensor: {name}")
    for name in sorted(required.keys() & ckpt.tensors.keys()):
        got = tuple(ckpt.tensors[name].shape)
        if got != required[name]:
            violations.append(
                f"wrong shape for {name}: expected {required[name]}, got {got}"
            )
        if ckpt.tensors[name].dtype != np.float32:
            violations.append(f"wrong dtype for {name}: {ckpt.tensors[name].dtype}")
    return violations


def write_checkpoint(ckpt: Checkpoint, path: str) -> None:
    _check_structural(ckpt)
    names = sorted(ckpt.tensors)
    header = bytearray()
    header += MAGIC
    header += struct.pack("<B", VERSION)
    cfg = ckpt.config
    header += struct.pack(
        "<5I", cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.vocab_size, cfg.max_seq_len
    )
    header += struct.pack("<I", len(names))
    offset = 0
    blobs = []
    for name in names:
        arr = ckpt.tensors[name]
        name_bytes = name.encode("utf-8")
        header += struct.pack("<H", len(name_bytes))
        header += name_bytes
        header += struct.pack("<B", arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        header += struct.pack("<Q", offset)
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        blobs.append(blob)
        offset += len(blob)
    header += struct.pack("<Q", offset)
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        for blob in blobs:
            fh.write(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise BadMagicError(f"not a checkpoint file: {path}")
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise BadMagicError(f"unsupported container version {version}")
    n_layers, n_heads, d_model, vocab_size, max_seq_len = r.unpack("<5I")
    try:
        config = ModelConfig(n_layers, n_heads, d_model, vocab_size, max_seq_len)
        config.validate()
    except ValueError as exc:
        raise CheckpointFormatError(f"invalid config block: {exc}") from exc
    (count,) = r.unpack("<I")
    entries = []
    expected_offset = 0
    seen = set()
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        if name in seen:
            raise DuplicateTensorError(f"duplicate tensor name: {name}")
        seen.add(name)
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I")
        if any(dim < 1 for dim in shape):
            raise ShapeMismatchError(f"tensor {name!r} has non-positive dim: {shape}")
        (offset,) = r.unpack("<Q")
        if offset != expected_offset:
            raise ShapeMismatchError(
                f"tensor {name!r} offset {offset} is not contiguous "
                f"(expected {expected_offset})"
            )
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        expected_offset += nbytes
        entries.append((name, shape, offset, nbytes))
    (data_len,) = r.unpack("<Q")
    if data_len != expected_offset:
        raise ShapeMismatchError(
            f"data section declares {data_len} bytes but tensors need {expected_offset}"
        )
    if r.pos + data_len > len(data):
        raise TruncatedFileError(
            f"data section declares {data_len} bytes but only "
            f"{len(data) - r.pos} remain"
        )
    tensors = {}
    for name, shape, offset, nbytes in entries:
        raw = data[r.pos + offset : r.pos + offset + nbytes]
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        tensors[name] = arr
    return Checkpoint(config=config, tensors=tensors)
