"""Training-pair generation and synthetic test images.

The repo ships synthetic phantoms (piecewise-constant shapes, affine ramps
and a woven texture) so every test runs offline; the classic cameraman
image is pulled from scikit-image when available.  Noise is zero-mean
Gaussian added in [0, 1] intensity space and deliberately NOT clipped:
clipping would bias the quadratic fidelity model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import block_average, read_image


@dataclass(frozen=True)
class TrainingPair:
    u_true: np.ndarray
    f: np.ndarray
    noise_sigma: float
    seed: int


def gen_training_pair(image, sigma, seed):
    """Noisy/clean pair from an image array or file path, seeded Gaussian noise."""
    if isinstance(image, (str, bytes)) or hasattr(image, "__fspath__"):
        u_true = read_image(image)
    else:
        u_true = np.asarray(image, dtype=float).copy()
    rng = np.random.default_rng(seed)
    f = u_true + sigma * rng.standard_normal(u_true.shape)
    return TrainingPair(u_true=u_true, f=f, noise_sigma=float(sigma), seed=int(seed))


def phantom_shapes(n=64):
    """Piecewise-constant phantom: rectangle and disk on a flat background."""
    img = np.full((n, n), 0.2)
    r0, r1 = n // 8, n // 2
    img[r0:r1, r0:r1] = 0.7
    yy, xx = np.mgrid[0:n, 0:n]
    disk = (yy - 0.65 * n) ** 2 + (xx - 0.6 * n) ** 2 <= (0.22 * n) ** 2
    img[disk] = 0.95
    return img


def phantom_ramp(n=64, a=0.1, b=0.4, c=0.4):
    """Affine image a + b*i/n + c*j/n (exactly reconstructed by TGV)."""
    yy, xx = np.mgrid[0:n, 0:n]
    return a + b * yy / n + c * xx / n


def phantom_texture(n=64, periods=6):
    """Woven plaid texture: axis-aligned stripes crossing at right angles."""
    yy, xx = np.mgrid[0:n, 0:n]
    fy = np.sin(2 * np.pi * periods * yy / n)
    fx = np.sin(2 * np.pi * periods * xx / n)
    weave = 0.5 + 0.18 * np.sign(fx) + 0.18 * np.sign(fy)
    weave += 0.08 * np.sign(fx * fy)
    return np.clip(weave, 0.0, 1.0)


def load_cameraman(size=128):
    """Classic cameraman test image, box-averaged down from 512x512.

    Requires scikit-image (ships the public-domain original); synthetic
    phantoms cover the offline test path.
    """
    try:
        from skimage import data as skdata
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError(
            "cameraman image needs scikit-image; use the synthetic phantoms instead"
        ) from exc
    img = np.asarray(skdata.camera(), dtype=float) / 255.0
    if 512 % size:
        raise ValueError("size must divide 512")
    return block_average(img, 512 // size)
