"""Reading and writing tensors, allocation tensors and scheme files.

Tensor JSON::

    {"shape": [2, 3], "data": [...row-major...]}

Binary tensors: ``b"TT01"``, uint32 rank, ``rank`` uint64 extents, then the
row-major float64 payload, all little-endian.

Allocation JSON holds ``k``, ``j``, ``i`` and canonical ``entries``
``[[k, j, i, value], ...]``; a scheme file adds a ``spec`` object.  The
writer emits one entry per line so files diff cleanly and two writes of
the same tensor are byte-identical.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .tensor_core import AllocationTensor, DenseTensor

BINARY_MAGIC = b"TT01"


def _num(v):
    # JSON cannot carry NaN/Inf; repr of a float is shortest round-trip.
    v = float(v)
    if not math.isfinite(v):
        raise ValidationError(f"non-finite value {v!r}")
    return repr(v)


def tensor_to_json(t: DenseTensor) -> str:
    t = t if isinstance(t, DenseTensor) else DenseTensor(t)
    shape = ", ".join(str(s) for s in t.shape)
    data = ", ".join(_num(v) for v in t.data)
    return f'{{"shape": [{shape}], "data": [{data}]}}\n'


def tensor_from_obj(obj) -> DenseTensor:
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise ParseError('tensor JSON needs "shape" and "data"')
    shape = obj["shape"]
    data = obj["data"]
    if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise ParseError(f"invalid shape {shape!r}")
    if not isinstance(data, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in data
    ):
        raise ParseError("tensor data must be a list of numbers")
    return DenseTensor(data, shape=shape)


def tensor_from_json(text: str) -> DenseTensor:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    return tensor_from_obj(obj)


def tensor_to_bytes(t: DenseTensor) -> bytes:
    t = t if isinstance(t, DenseTensor) else DenseTensor(t)
    header = BINARY_MAGIC + struct.pack("<I", len(t.shape))
    header += struct.pack(f"<{len(t.shape)}Q", *t.shape)
    return header + np.ascontiguousarray(t.array, dtype="<f8").tobytes()


def tensor_from_bytes(buf: bytes) -> DenseTensor:
    if len(buf) < 8 or buf[:4] != BINARY_MAGIC:
        raise ParseError("missing TT01 magic")
    (rank,) = struct.unpack_from("<I", buf, 4)
    end = 8 + 8 * rank
    if len(buf) < end:
        raise ParseError("truncated extents")
    shape = struct.unpack_from(f"<{rank}Q", buf, 8)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(buf) != end + 8 * count:
        raise ParseError(f"payload is {len(buf) - end} bytes, expected {8 * count}")
    data = np.frombuffer(buf, dtype="<f8", offset=end, count=count)
    return DenseTensor(data.astype(np.float64), shape=shape)


def read_tensor(path) -> DenseTensor:
    """Load a tensor file, detecting binary vs JSON from the magic bytes."""
    raw = Path(path).read_bytes()
    if raw[:4] == BINARY_MAGIC:
        return tensor_from_bytes(raw)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("tensor file is neither TT01 binary nor UTF-8 JSON") from exc
    return tensor_from_json(text)


def write_tensor(path, t: DenseTensor, fmt: str = "json") -> None:
    if fmt == "json":
        Path(path).write_text(tensor_to_json(t), encoding="utf-8")
    elif fmt == "binary":
        Path(path).write_bytes(tensor_to_bytes(t))
    else:
        raise ValueError(f"unknown tensor format {fmt!r}")


def _entries_block(s: AllocationTensor) -> str:
    if s.nnz == 0:
        return "[]"
    rows = [f"    [{k}, {j}, {i}, {_num(v)}]" for k, j, i, v in s.entries]
    return "[\n" + ",\n".join(rows) + "\n  ]"


def allocation_to_json(s: AllocationTensor, spec: dict | None = None) -> str:
    parts = [
        f'  "k": {s.k_params}',
        f'  "j": {s.j_out}',
        f'  "i": {s.i_in}',
        f'  "entries": {_entries_block(s)}',
    ]
    if spec is not None:
        parts.append(f'  "spec": {json.dumps(spec, allow_nan=False)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def allocation_from_obj(obj) -> AllocationTensor:
    if not isinstance(obj, dict):
        raise ParseError("allocation JSON must be an object")
    try:
        k, j, i, entries = obj["k"], obj["j"], obj["i"], obj["entries"]
    except KeyError as exc:
        raise ParseError(f"allocation JSON missing key {exc.args[0]!r}") from None
    if not all(isinstance(x, int) for x in (k, j, i)) or not isinstance(entries, list):
        raise ParseError("allocation extents must be integers and entries a list")
    rows = []
    for n, e in enumerate(entries):
        if (
            not isinstance(e, list)
            or len(e) != 4
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in e[:3])
            or not isinstance(e[3], (int, float))
        ):
            raise ParseError(f"entry {n} is not [k, j, i, value]: {e!r}")
        rows.append(e)
    s = AllocationTensor(k, j, i, rows)
    if len(rows) > 1 and [list(r[:3]) for r in rows] != [list(e[:3]) for e in s.entries]:
        raise ValidationError("entries are not in canonical (k, j, i) order")
    return s


def load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    except UnicodeDecodeError as exc:
        raise ParseError("file is not UTF-8 text") from exc


def read_scheme(path) -> tuple[AllocationTensor, dict | None]:
    """Load an allocation or scheme file; returns (S, spec-or-None)."""
    obj = load_json(path)
    s = allocation_from_obj(obj)
    spec = obj.get("spec")
    if spec is not None and not isinstance(spec, dict):
        raise ParseError('"spec" must be an object')
    return s, spec


def write_scheme(path, s: AllocationTensor, spec: dict | None = None) -> None:
    Path(path).write_text(allocation_to_json(s, spec), encoding="utf-8")
