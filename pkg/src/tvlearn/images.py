"""Image IO and resampling utilities.

Files are PGM (P2/P5, maxval 255) mapped linearly to [0, 1]; PNG works
behind the same read/write interface.  Downsampling is block averaging,
upsampling is bilinear with half-pixel centers and clamped edges (mean of
an affine ramp survives a down/up round trip to machine precision).
"""

from __future__ import annotations

import numpy as np


def block_average(image, k):
    """k-by-k block average; image dimensions must be divisible by k."""
    image = np.asarray(image, dtype=float)
    r, c = image.shape
    if r % k or c % k:
        raise ValueError(f"{r}x{c} image not divisible into {k}x{k} blocks")
    return image.reshape(r // k, k, c // k, k).mean(axis=(1, 3))


def downsample2(image):
    return block_average(image, 2)


def _bilinear_axis(image, new_len, axis):
    n = image.shape[axis]
    t = (np.arange(new_len) + 0.5) * n / new_len - 0.5
    t = np.clip(t, 0.0, n - 1.0)
    i0 = np.floor(t).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    w = t - i0
    a = np.take(image, i0, axis=axis)
    b = np.take(image, i1, axis=axis)
    shape = [1, 1]
    shape[axis] = new_len
    w = w.reshape(shape)
    return a * (1 - w) + b * w


def upsample_bilinear(image, shape):
    image = np.asarray(image, dtype=float)
    out = _bilinear_axis(image, shape[0], 0)
    return _bilinear_axis(out, shape[1], 1)


def resize(image, factor):
    """Resize by a scalar factor: block average down, bilinear up."""
    image = np.asarray(image, dtype=float)
    if factor == 1:
        return image.copy()
    if factor < 1:
        k = round(1.0 / factor)
        if abs(k * factor - 1.0) > 1e-12:
            raise ValueError(f"downsampling factor {factor} is not 1/k for integer k")
        return block_average(image, k)
    shape = (round(image.shape[0] * factor), round(image.shape[1] * factor))
    return upsample_bilinear(image, shape)


# ---------------------------------------------------------------------------
# PGM / PNG files
# ---------------------------------------------------------------------------

def _tokens(data):
    pos = 0
    while pos < len(data):
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        if pos > start:
            yield data[start:pos], pos


def read_pgm(path):
    """Read a P2/P5 PGM file into a float image in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    it = _tokens(data)
    magic, _ = next(it)
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"not a PGM file: magic {magic!r}")
    cols, _ = next(it)
    rows, _ = next(it)
    maxval, end = next(it)
    cols, rows, maxval = int(cols), int(rows), int(maxval)
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"bad maxval {maxval}")
    if magic == b"P2":
        vals = []
        for tok, end in it:
            vals.append(int(tok))
        arr = np.array(vals, dtype=float)
    else:
        raw = data[end + 1:]
        if maxval < 256:
            arr = np.frombuffer(raw[: rows * cols], dtype=np.uint8).astype(float)
        else:
            arr = np.frombuffer(raw[: 2 * rows * cols], dtype=">u2").astype(float)
    if arr.size != rows * cols:
        raise ValueError(f"expected {rows * cols} pixels, got {arr.size}")
    return arr.reshape(rows, cols) / maxval


def write_pgm(path, image, binary=True):
    """Write a [0, 1] image as PGM with maxval 255."""
    image = np.asarray(image, dtype=float)
    pix = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    rows, cols = pix.shape
    header = f"P5 {cols} {rows} 255\n" if binary else f"P2\n{cols} {rows}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode())
        if binary:
            fh.write(pix.tobytes())
        else:
            for row in pix:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())


def read_image(path):
    path = str(path)
    if path.lower().endswith(".pgm"):
        return read_pgm(path)
    import matplotlib.image as mpimg

    arr = np.asarray(mpimg.imread(path), dtype=float)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=-1)
    if arr.max() > 1.0:
        arr = arr / 255.0
    return arr


def write_image(path, image):
    path = str(path)
    if path.lower().endswith(".pgm"):
        write_pgm(path, image)
        return
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.image as mpimg

    mpimg.imsave(path, np.clip(image, 0.0, 1.0), cmap="gray", vmin=0.0, vmax=1.0)
