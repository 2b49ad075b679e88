"""Binary checkpoint format for the three network types.

Layout (little-endian throughout)::

    magic   4 bytes  b"SGTC"
    version u16      currently 1
    kind    u8       1=segnet 2=head 3=scratch
    nfields u8       config echo: per field u8 key length, UTF-8 key,
                     u8 type tag (0=int 1=float 2=bool), i64 or f64 value
    epoch   u32      training metadata
    seed    u64
    ntensor u32      per tensor: u16 name length, UTF-8 name, u8 rank,
                     u32 dims..., float32 raw values in C order

Tensor payloads are float32, so a float32 network round-trips bitwise;
float64 networks are downcast on save. Loading rebuilds the network from
the embedded config echo; passing ``expected_config`` checks the echo
against what the caller wanted and fails with the differing fields.
"""

import struct

import numpy as np

from .errors import ConfigError, DataError
from .nets import NET_KINDS, build_net, config_dict, net_kind
from .tensor import Tensor

MAGIC = b"SGTC"
VERSION = 1
_KIND_TAGS = {"segnet": 1, "head": 2, "scratch": 3}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def save_checkpoint(path, net, epoch=0, seed=0):
    """Write ``net`` (with its config echo and metadata) to ``path``."""
    kind = net_kind(net)
    fields = config_dict(net.config)
    chunks = [MAGIC, struct.pack("<HB", VERSION, _KIND_TAGS[kind]), struct.pack("<B", len(fields))]
    for key, value in fields.items():
        raw = key.encode("utf-8")
        chunks.append(struct.pack("<B", len(raw)))
        chunks.append(raw)
        if isinstance(value, bool):
            chunks.append(struct.pack("<Bq", 2, int(value)))
        elif isinstance(value, (int, np.integer)):
            chunks.append(struct.pack("<Bq", 0, int(value)))
        else:
            chunks.append(struct.pack("<Bd", 1, float(value)))
    chunks.append(struct.pack("<IQ", int(epoch), int(seed)))
    named = net.named_tensors()
    chunks.append(struct.pack("<I", len(named)))
    for name, tensor in named.items():
        arr = np.ascontiguousarray(tensor.data if isinstance(tensor, Tensor) else tensor, dtype=np.float32)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, n):
        if self.offset + n > len(self.blob):
            raise DataError(
                f"{self.path}: truncated checkpoint, needed {n} bytes at offset {self.offset} "
                f"but only {len(self.blob) - self.offset} remain"
            )
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_config=None, dtype=np.float32):
    """Rebuild the saved network; returns (net, metadata dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, str(path))
    if r.take(4) != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (version, kind_tag) = r.unpack("<HB")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}, expected {VERSION}")
    if kind_tag not in _TAG_KINDS:
        raise DataError(f"{path}: unknown network kind tag {kind_tag}")
    kind = _TAG_KINDS[kind_tag]
    (nfields,) = r.unpack("<B")
    fields = {}
    for _ in range(nfields):
        (klen,) = r.unpack("<B")
        key = r.take(klen).decode("utf-8")
        (tag,) = r.unpack("<B")
        if tag == 0:
            (fields[key],) = r.unpack("<q")
        elif tag == 2:
            fields[key] = bool(r.unpack("<q")[0])
        else:
            (fields[key],) = r.unpack("<d")
    epoch, seed = r.unpack("<IQ")

    if expected_config is not None:
        expected_kind = net_kind_for_config(expected_config)
        if expected_kind != kind:
            raise ConfigError(f"{path}: checkpoint holds a {kind} network, expected {expected_kind}")
        wanted = config_dict(expected_config)
        diffs = [
            f"{key}: checkpoint={fields.get(key)!r} expected={wanted[key]!r}"
            for key in wanted
            if fields.get(key) != wanted[key]
        ]
        diffs += [f"{key}: checkpoint={fields[key]!r} expected=<absent>" for key in fields if key not in wanted]
        if diffs:
            raise ConfigError(f"{path}: checkpoint config does not match: " + "; ".join(sorted(diffs)))

    net = build_net(kind, fields, seed=0, dtype=dtype)
    named = net.named_tensors()
    (ntensors,) = r.unpack("<I")
    seen = set()
    for _ in range(ntensors):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = tuple(r.unpack(f"<{rank}I"))
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        if name not in named:
            raise DataError(f"{path}: checkpoint tensor {name!r} does not exist in a {kind} network")
        target = named[name]
        expected_shape = target.data.shape if isinstance(target, Tensor) else target.shape
        if shape != tuple(expected_shape):
            raise DataError(f"{path}: tensor {name!r} has shape {shape}, expected {tuple(expected_shape)}")
        if isinstance(target, Tensor):
            target.data = values.astype(net.dtype)
        else:
            target[:] = values
        seen.add(name)
    missing = sorted(set(named) - seen)
    if missing:
        raise DataError(f"{path}: checkpoint is missing tensors: {', '.join(missing)}")
    if r.offset != len(blob):
        raise DataError(f"{path}: {len(blob) - r.offset} trailing bytes after tensor table")
    return net, {"epoch": epoch, "seed": seed, "kind": kind}


def net_kind_for_config(config):
    for kind, (cfg_cls, _) in NET_KINDS.items():
        if isinstance(config, cfg_cls):
            return kind
    raise TypeError(f"unknown config type {type(config)!r}")
