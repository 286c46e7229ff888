"""Small batched helpers for rotations and Procrustes projection."""

import numpy as np


def project_to_so(A):
    """Nearest special orthogonal matrix to each block of ``A``.

    Solves ``max <R, A>`` over SO(d) through the SVD ``A = U S V^T``, with
    ``R = U diag(1, ..., 1, det(U V^T)) V^T``. Works on a single ``(d, d)``
    matrix or a stack ``(..., d, d)``.
    """
    A = np.asarray(A, dtype=float)
    U, _, Vt = np.linalg.svd(A)
    det = np.linalg.det(U @ Vt)
    U = U.copy()
    U[..., :, -1] *= np.where(det < 0.0, -1.0, 1.0)[..., None]
    return U @ Vt


def rot2(theta):
    """Planar rotation(s) by ``theta``; vectorized over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def hat(w):
    """Skew-symmetric matrix of a 3-vector (batched over leading axes)."""
    w = np.asarray(w, dtype=float)
    z = np.zeros(w.shape[:-1])
    return np.stack(
        [
            np.stack([z, -w[..., 2], w[..., 1]], -1),
            np.stack([w[..., 2], z, -w[..., 0]], -1),
            np.stack([-w[..., 1], w[..., 0], z], -1),
        ],
        -2,
    )


def exp_so3(w):
    """Rodrigues formula, batched over leading axes of ``w``."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    K = hat(w)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * K + b * (K @ K)


def exp_so(w, d):
    """Exponential map of so(d) from minimal coordinates (angle for d=2)."""
    w = np.asarray(w, dtype=float)
    if d == 2:
        return rot2(w[..., 0])
    return exp_so3(w)


def random_rotations(rng, n, d):
    """``n`` rotations drawn uniformly (Haar) from SO(d)."""
    if d == 2:
        return rot2(rng.uniform(-np.pi, np.pi, size=n))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    x, y, z, w = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def orthogonality_error(R):
    """Per-block ``||R^T R - I||_F``."""
    d = R.shape[-1]
    return np.linalg.norm(np.swapaxes(R, -1, -2) @ R - np.eye(d), axis=(-2, -1))


def segment_sum(index, weights, n):
    """Float sums of ``weights`` grouped by ``index`` into ``n`` bins (also when empty)."""
    return np.bincount(index, weights=weights, minlength=n).astype(float, copy=False)
