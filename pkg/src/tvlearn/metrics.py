"""Reconstruction quality metrics: tracking loss, PSNR and SSIM.

The "l2" column reported everywhere is the tracking loss 0.5*||u - t||^2
(the upper-level objective), not the plain Euclidean norm.  PSNR uses peak
1.0 and is capped at 999 dB for CSV friendliness.  SSIM uses an 11x11
Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03 and dynamic range 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 999.0


@dataclass(frozen=True)
class MetricsRow:
    l2: float
    psnr: float
    ssim: float


def l2_loss(u, u_true):
    u = np.asarray(u, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    return 0.5 * float(((u - u_true) ** 2).sum())


def psnr(u, u_true, peak=1.0):
    u = np.asarray(u, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    mse = float(((u - u_true) ** 2).mean())
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP)


def _gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x ** 2) / (2 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(u, v, peak=1.0, window_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity over the valid filter region."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("shape mismatch")
    win = _gaussian_window(window_size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    def filt(img):
        return convolve2d(img, win, mode="valid")

    mu1 = filt(u)
    mu2 = filt(v)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s1 = filt(u * u) - mu1_sq
    s2 = filt(v * v) - mu2_sq
    s12 = filt(u * v) - mu12
    num = (2 * mu12 + c1) * (2 * s12 + c2)
    den = (mu1_sq + mu2_sq + c1) * (s1 + s2 + c2)
    return float((num / den).mean())


def metrics(u, u_true):
    return MetricsRow(
        l2=l2_loss(u, u_true), psnr=psnr(u, u_true), ssim=ssim(u, u_true)
    )
