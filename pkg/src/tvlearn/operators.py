"""Discrete differential operators, patch parameter maps and polar/spherical lifts.

Conventions used throughout the package:

* images are 2-D float arrays of shape ``(rows, cols)``, row-major;
* vector fields carry one 2-vector per pixel and are stored as arrays of
  shape ``(2, rows, cols)`` with ``field[0]`` the x-component (column
  direction) and ``field[1]`` the y-component (row direction);
* symmetric 2x2 tensor fields are packed per pixel as the 3-vector
  ``[a11, sqrt(2)*a12, a22]`` and stored with shape ``(3, rows, cols)``.
  The packing makes the Euclidean norm of the 3-vector equal to the
  Frobenius norm of the unpacked matrix.

Gradients use forward differences with homogeneous Neumann boundary
(zero difference past the last row/column), so there is exactly one
gradient vector per pixel (m = d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)


class CollinearityViolation(ValueError):
    """Primal/dual vectors are not collinear enough to share one angle."""

    def __init__(self, index, alignment, bound):
        self.index = index
        self.alignment = alignment
        self.bound = bound
        super().__init__(
            f"collinearity violated at flat index {index}: "
            f"<p,q> = {alignment:.3e} < {bound:.3e}"
        )


# ---------------------------------------------------------------------------
# first-order difference operators
# ---------------------------------------------------------------------------

def grad_forward(u):
    """Forward-difference gradient of an image, Neumann boundary.

    Returns an array of shape ``(2, rows, cols)``; the last column of the
    x-component and the last row of the y-component are zero.
    """
    u = np.asarray(u, dtype=float)
    g = np.zeros((2,) + u.shape)
    g[0, :, :-1] = u[:, 1:] - u[:, :-1]
    g[1, :-1, :] = u[1:, :] - u[:-1, :]
    return g


def div_adjoint(q):
    """Exact matrix adjoint of :func:`grad_forward` (K^T q).

    Equals the negative discrete divergence up to sign convention.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 3 or q.shape[0] != 2:
        raise ValueError(f"expected vector field of shape (2, r, c), got {q.shape}")
    out = np.zeros(q.shape[1:])
    out[:, :-1] -= q[0, :, :-1]
    out[:, 1:] += q[0, :, :-1]
    out[:-1, :] -= q[1, :-1, :]
    out[1:, :] += q[1, :-1, :]
    return out


def sym_grad(w):
    """Packed symmetrized gradient of a vector field.

    For ``w = (w1, w2)`` this is per pixel
    ``[dx w1, (dy w1 + dx w2)/sqrt(2), dy w2]`` so that the Euclidean norm
    of each 3-vector equals the Frobenius norm of 0.5*(Dw + Dw^T).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 3 or w.shape[0] != 2:
        raise ValueError(f"expected vector field of shape (2, r, c), got {w.shape}")
    g1 = grad_forward(w[0])
    g2 = grad_forward(w[1])
    out = np.zeros((3,) + w.shape[1:])
    out[0] = g1[0]
    out[1] = (g1[1] + g2[0]) / SQRT2
    out[2] = g2[1]
    return out


def sym_grad_adjoint(lam):
    """Exact adjoint of :func:`sym_grad` applied to a packed tensor field."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 3 or lam.shape[0] != 3:
        raise ValueError(f"expected packed tensor field (3, r, c), got {lam.shape}")
    zero = np.zeros_like(lam[0])
    w1 = div_adjoint(np.stack([lam[0], lam[1] / SQRT2]))
    w2 = div_adjoint(np.stack([lam[1] / SQRT2, lam[2]]))
    del zero
    return np.stack([w1, w2])


def grad_matrices(rows, cols):
    """Sparse forward-difference matrices ``(Kx, Ky)``, each d-by-d."""
    d = rows * cols
    idx = np.arange(d).reshape(rows, cols)

    src = idx[:, :-1].ravel()
    dst = idx[:, 1:].ravel()
    data = np.concatenate([np.ones(src.size), -np.ones(src.size)])
    rows_ = np.concatenate([src, src])
    cols_ = np.concatenate([dst, src])
    kx = sp.csr_matrix((data, (rows_, cols_)), shape=(d, d))

    src = idx[:-1, :].ravel()
    dst = idx[1:, :].ravel()
    data = np.concatenate([np.ones(src.size), -np.ones(src.size)])
    rows_ = np.concatenate([src, src])
    cols_ = np.concatenate([dst, src])
    ky = sp.csr_matrix((data, (rows_, cols_)), shape=(d, d))
    return kx, ky


def sym_grad_matrix(rows, cols):
    """Sparse matrix of :func:`sym_grad`, shape (3d, 2d), packed ordering."""
    kx, ky = grad_matrices(rows, cols)
    d = rows * cols
    z = sp.csr_matrix((d, d))
    return sp.bmat(
        [[kx, z], [ky / SQRT2, kx / SQRT2], [z, ky]], format="csr"
    )


# ---------------------------------------------------------------------------
# patch parameter maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchSpec:
    """Assignment of image pixels to a rectangular grid of patches.

    ``assignment`` maps every pixel to its patch index (row-major over the
    patch grid).  When the image dimensions are not divisible by the patch
    grid, the last row/column of patches absorbs the remainder.
    """

    rows: int
    cols: int
    grid_rows: int
    grid_cols: int
    assignment: np.ndarray  # (rows, cols) int array of patch ids

    @property
    def num_patches(self):
        return self.grid_rows * self.grid_cols

    @property
    def pixels_per_patch(self):
        return np.bincount(self.assignment.ravel(), minlength=self.num_patches)


def make_patch_spec(rows, cols, grid_rows=1, grid_cols=1):
    if grid_rows < 1 or grid_cols < 1 or grid_rows > rows or grid_cols > cols:
        raise ValueError(f"patch grid {grid_rows}x{grid_cols} invalid for {rows}x{cols} image")
    ri = np.minimum(np.arange(rows) // (rows // grid_rows), grid_rows - 1)
    ci = np.minimum(np.arange(cols) // (cols // grid_cols), grid_cols - 1)
    assignment = ri[:, None] * grid_cols + ci[None, :]
    return PatchSpec(rows, cols, grid_rows, grid_cols, assignment)


def patch_apply(alpha, spec):
    """Broadcast patch parameters to per-pixel weights, Q(alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (spec.num_patches,):
        raise ValueError(
            f"expected {spec.num_patches} patch parameters, got {alpha.shape}"
        )
    return alpha[spec.assignment]


def patch_adjoint(weights, spec):
    """Adjoint of :func:`patch_apply`: sums pixel values over each patch."""
    weights = np.asarray(weights, dtype=float)
    return np.bincount(
        spec.assignment.ravel(), weights=weights.ravel(), minlength=spec.num_patches
    )


def patch_matrix(spec):
    """Sparse pixel-by-patch 0/1 indicator (the gradient of Q), shape (d, P)."""
    d = spec.rows * spec.cols
    return sp.csr_matrix(
        (np.ones(d), (np.arange(d), spec.assignment.ravel())),
        shape=(d, spec.num_patches),
    )


# ---------------------------------------------------------------------------
# polar lift (2-vector pairs sharing one angle)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolarLift:
    """Radii and shared angle of a collinear primal/dual 2-vector pair."""

    r: np.ndarray      # primal radius, >= 0
    delta: np.ndarray  # dual radius, >= 0
    theta: np.ndarray  # shared angle, radians


def lift_polar(primal, dual, tol=1e-9):
    """Write collinear 2-vector fields as radius * [cos(theta), sin(theta)].

    The angle is taken from whichever vector has the larger norm and set to
    zero when both radii are below ``tol``.  Raises
    :class:`CollinearityViolation` when a pair with both norms above ``tol``
    fails ``<p, q> >= (1 - tol) * |p| * |q|``.
    """
    primal = np.asarray(primal, dtype=float)
    dual = np.asarray(dual, dtype=float)
    if primal.shape != dual.shape:
        raise ValueError("primal/dual shape mismatch")
    r = np.hypot(primal[0], primal[1])
    delta = np.hypot(dual[0], dual[1])

    both = (r > tol) & (delta > tol)
    if np.any(both):
        inner = primal[0] * dual[0] + primal[1] * dual[1]
        bound = (1.0 - tol) * r * delta
        bad = both & (inner < bound)
        if np.any(bad):
            gap = np.where(bad, bound - inner, -np.inf)
            k = int(np.argmax(gap))
            raise CollinearityViolation(k, inner.ravel()[k], bound.ravel()[k])

    use_primal = r >= delta
    theta = np.where(
        use_primal, np.arctan2(primal[1], primal[0]), np.arctan2(dual[1], dual[0])
    )
    theta = np.where((r <= tol) & (delta <= tol), 0.0, theta)
    return PolarLift(r=r, delta=delta, theta=theta)


def unlift_polar(lift):
    """Reconstruct the primal/dual vector fields from a polar lift."""
    c, s = np.cos(lift.theta), np.sin(lift.theta)
    primal = np.stack([lift.r * c, lift.r * s])
    dual = np.stack([lift.delta * c, lift.delta * s])
    return primal, dual


# ---------------------------------------------------------------------------
# spherical lift (packed-tensor pairs sharing two angles)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphericalLift:
    """Radii and shared spherical angles of a collinear 3-vector pair."""

    rho: np.ndarray   # primal radius, >= 0
    tau: np.ndarray   # dual radius, >= 0
    phi: np.ndarray   # inclination (angle from the third axis)
    azi: np.ndarray   # azimuth in the first two coordinates


def _unit3(phi, azi):
    sp_ = np.sin(phi)
    return np.stack([sp_ * np.cos(azi), sp_ * np.sin(azi), np.cos(phi)])


def lift_spherical(primal, dual, tol=1e-9):
    """Spherical-coordinate lift of collinear packed 3-vector fields.

    Angles come from the larger-norm vector; the azimuth is set to zero at
    the pole (vanishing first two components) and both angles are zero when
    both radii fall below ``tol``.
    """
    primal = np.asarray(primal, dtype=float)
    dual = np.asarray(dual, dtype=float)
    if primal.shape != dual.shape:
        raise ValueError("primal/dual shape mismatch")
    rho = np.sqrt((primal ** 2).sum(axis=0))
    tau = np.sqrt((dual ** 2).sum(axis=0))

    both = (rho > tol) & (tau > tol)
    if np.any(both):
        inner = (primal * dual).sum(axis=0)
        bound = (1.0 - tol) * rho * tau
        bad = both & (inner < bound)
        if np.any(bad):
            gap = np.where(bad, bound - inner, -np.inf)
            k = int(np.argmax(gap))
            raise CollinearityViolation(k, inner.ravel()[k], bound.ravel()[k])

    ref = np.where(rho >= tau, rho, tau)
    vec = np.where(rho >= tau, primal, dual)
    safe = np.maximum(ref, 1e-300)
    phi = np.arccos(np.clip(vec[2] / safe, -1.0, 1.0))
    planar = np.hypot(vec[0], vec[1])
    azi = np.where(planar > tol * np.maximum(ref, 1.0), np.arctan2(vec[1], vec[0]), 0.0)
    dead = (rho <= tol) & (tau <= tol)
    phi = np.where(dead, 0.0, phi)
    azi = np.where(dead, 0.0, azi)
    return SphericalLift(rho=rho, tau=tau, phi=phi, azi=azi)


def unlift_spherical(lift):
    """Reconstruct the packed primal/dual 3-vector fields from a lift."""
    n = _unit3(lift.phi, lift.azi)
    return lift.rho * n, lift.tau * n
