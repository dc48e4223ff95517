"""Binary serialization of solver solutions.

Little-endian layout:

    offset  size  field
    0       8     magic b"TVLSOLN\\0"
    8       2     format version (u16), currently 1
    10      1     model tag (u8): 0 = tv, 1 = tvai, 2 = tgv2
    11      1     reserved (0)
    12      4x4   rows, cols, patch grid rows, patch grid cols (u32 each)
    28      4     number of named arrays (u32)

followed by that many records, each:

    1     name length (u8)
    ...   ASCII name
    1     ndim (u8)
    4*nd  dims (u32 each)
    ...   float64 little-endian data, C order

Every solution file stores at least "x" (the stacked variable vector),
"f" (noisy data) and "u_true" (ground truth), which is enough to rebuild
the model description and certify the point later.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TVLSOLN\x00"
VERSION = 1
MODEL_TAGS = {"tv": 0, "tvai": 1, "tgv2": 2}
TAG_MODELS = {v: k for k, v in MODEL_TAGS.items()}


def save_solution(path, model, rows, cols, grid_rows, grid_cols, arrays):
    if model not in MODEL_TAGS:
        raise ValueError(f"unknown model {model!r}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HBB", VERSION, MODEL_TAGS[model], 0))
        fh.write(struct.pack("<4I", rows, cols, grid_rows, grid_cols))
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            nm = name.encode("ascii")
            if len(nm) > 255:
                raise ValueError("array name too long")
            fh.write(struct.pack("<B", len(nm)))
            fh.write(nm)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_solution(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError("bad magic: not a solution file")
        version, tag, _ = struct.unpack("<HBB", fh.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported version {version}")
        rows, cols, grows, gcols = struct.unpack("<4I", fh.read(16))
        count = struct.unpack("<I", fh.read(4))[0]
        arrays = {}
        for _ in range(count):
            nlen = struct.unpack("<B", fh.read(1))[0]
            name = fh.read(nlen).decode("ascii")
            ndim = struct.unpack("<B", fh.read(1))[0]
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            size = int(np.prod(dims)) if dims else 1
            arrays[name] = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(dims).copy()
    return {
        "model": TAG_MODELS[tag],
        "rows": rows,
        "cols": cols,
        "grid_rows": grows,
        "grid_cols": gcols,
        "arrays": arrays,
    }
