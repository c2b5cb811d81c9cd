"""Reader and canonical writer for the safetensors-style tensor container.

Layout: 8-byte little-endian header length ``N``, ``N`` bytes of JSON
header, then the payload. Offsets in the header are relative to the start
of the payload.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DtypeError, HeaderError

DTYPE_SIZES = {
    "BOOL": 1, "U8": 1, "I8": 1, "F8_E4M3": 1, "F8_E5M2": 1,
    "I16": 2, "U16": 2, "F16": 2, "BF16": 2,
    "I32": 4, "U32": 4, "F32": 4,
    "I64": 8, "U64": 8, "F64": 8,
}
NUMPY_DTYPES = {
    "BOOL": "bool", "U8": "<u1", "I8": "<i1", "I16": "<i2", "U16": "<u2", "F16": "<f2",
    "I32": "<i4", "U32": "<u4", "F32": "<f4", "I64": "<i8", "U64": "<u8", "F64": "<f8",
}
_FROM_NUMPY = {np.dtype(v): k for k, v in NUMPY_DTYPES.items()}


@dataclass(frozen=True)
class TensorRecord:
    dtype: str
    shape: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if self.dtype not in DTYPE_SIZES:
            raise DtypeError(f"unknown dtype {self.dtype!r}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if any(s < 0 for s in self.shape):
            raise HeaderError(f"negative extent in shape {self.shape}")
        if len(self.data) != self.nbytes:
            raise BoundsError(
                f"payload of {len(self.data)} bytes does not fit {self.dtype}{list(self.shape)}"
            )

    @property
    def itemsize(self) -> int:
        return DTYPE_SIZES[self.dtype]

    @property
    def nbytes(self) -> int:
        return self.itemsize * math.prod(self.shape)

    @classmethod
    def from_array(cls, array: np.ndarray, dtype: str | None = None) -> TensorRecord:
        """Wrap a numpy array; ``dtype`` overrides the inferred container dtype."""
        arr = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))
        if dtype is None:
            dtype = _FROM_NUMPY[arr.dtype]
        return cls(dtype, arr.shape, arr.tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=NUMPY_DTYPES[self.dtype]).reshape(self.shape)


@dataclass
class TensorStore:
    tensors: dict[str, TensorRecord] = field(default_factory=dict)
    metadata: dict[str, str] | None = None

    def __getitem__(self, name: str) -> TensorRecord:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def num_params(self) -> int:
        return sum(math.prod(t.shape) for t in self.tensors.values())


def read_container(data: bytes) -> TensorStore:
    if len(data) < 8:
        raise HeaderError("container is shorter than its 8-byte header length")
    (n,) = struct.unpack("<Q", data[:8])
    if n > len(data) - 8:
        raise HeaderError(f"header length {n} exceeds file size")
    try:
        header = json.loads(data[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"container header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderError("container header must be a JSON object")
    payload = memoryview(data)[8 + n :]
    metadata = header.pop("__metadata__", None)
    if metadata is not None and not (
        isinstance(metadata, dict) and all(isinstance(v, str) for v in metadata.values())
    ):
        raise HeaderError("__metadata__ must be a string map")

    spans = []
    tensors = {}
    for name, entry in header.items():
        try:
            dtype, shape = entry["dtype"], entry["shape"]
            begin, end = entry["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise HeaderError(f"malformed header entry for {name!r}") from exc
        if dtype not in DTYPE_SIZES:
            raise DtypeError(f"tensor {name!r} has unknown dtype {dtype!r}")
        if not (isinstance(shape, list) and all(isinstance(s, int) and s >= 0 for s in shape)):
            raise HeaderError(f"tensor {name!r} has a malformed shape")
        if not (isinstance(begin, int) and isinstance(end, int) and 0 <= begin <= end):
            raise BoundsError(f"tensor {name!r} has malformed offsets")
        if end > len(payload):
            raise BoundsError(f"tensor {name!r} ends at {end}, past the {len(payload)}-byte payload")
        if end - begin != DTYPE_SIZES[dtype] * math.prod(shape):
            raise BoundsError(f"tensor {name!r} offsets do not match its shape and dtype")
        spans.append((begin, end, name))
        tensors[name] = TensorRecord(dtype, tuple(shape), bytes(payload[begin:end]))
    spans.sort()
    for (b0, e0, n0), (b1, e1, n1) in zip(spans, spans[1:]):
        if b1 < e0:
            raise BoundsError(f"tensors {n0!r} and {n1!r} overlap")
    return TensorStore(tensors, metadata)


def write_container(store: TensorStore) -> bytes:
    """Canonical bytes: names sorted, payloads packed densely in that order."""
    header: dict[str, object] = {}
    if store.metadata is not None:
        header["__metadata__"] = dict(store.metadata)
    offset = 0
    names = sorted(store.tensors)
    for name in names:
        t = store.tensors[name]
        header[name] = {"dtype": t.dtype, "shape": list(t.shape),
                        "data_offsets": [offset, offset + len(t.data)]}
        offset += len(t.data)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    blob += b" " * (-len(blob) % 8)
    parts = [struct.pack("<Q", len(blob)), blob]
    parts.extend(store.tensors[name].data for name in names)
    return b"".join(parts)
