"""Rotation algebra on SO(3).

All functions accept a single rotation or a batch: matrices have shape
``(..., 3, 3)``, axis-angle vectors ``(..., 3)`` and 6D vectors ``(..., 6)``.
The 6D layout is column-major: the first column of the matrix followed by
the second column.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput

_SMALL_ANGLE = 1e-8
_NEAR_PI = 1e-3
_DEGENERATE_NORM = 1e-9


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix ``[v]x`` such that ``hat(v) @ u == cross(v, u)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def exp_so3(v: np.ndarray) -> np.ndarray:
    """Rodrigues' formula; Taylor series for angles below 1e-8."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    k = hat(v)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def log_so3(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of ``r`` with norm in ``[0, pi]``.

    Near a half-turn the axis is read from the largest diagonal entry of the
    symmetric part, which stays well conditioned where ``sin(theta)`` vanishes.
    """
    r = np.asarray(r, dtype=float)
    batch = r.shape[:-2]
    r2 = r.reshape(-1, 3, 3)
    skew = vee(r2 - np.swapaxes(r2, -1, -2)) / 2.0  # sin(theta) * axis
    s = np.linalg.norm(skew, axis=-1)
    c = (np.trace(r2, axis1=-2, axis2=-1) - 1.0) / 2.0
    theta = np.arctan2(s, np.clip(c, -1.0, 1.0))
    out = np.empty((r2.shape[0], 3))

    small = theta < _SMALL_ANGLE
    near_pi = theta > np.pi - _NEAR_PI
    regular = ~(small | near_pi)

    out[small] = skew[small] * (1.0 + theta[small, None] ** 2 / 6.0)
    out[regular] = skew[regular] * (theta[regular] / s[regular])[:, None]

    for i in np.flatnonzero(near_pi):
        sym = (r2[i] + r2[i].T) / 2.0
        nn = (sym - c[i] * np.eye(3)) / (1.0 - c[i])
        k = int(np.argmax(np.diag(nn)))
        axis = nn[:, k] / np.sqrt(max(nn[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if axis @ skew[i] < 0.0:
            axis = -axis
        out[i] = axis * theta[i]
    return out.reshape(batch + (3,))


def angle_of(r: np.ndarray) -> np.ndarray:
    """Rotation angle in radians, robust near 0 and pi."""
    r = np.asarray(r, dtype=float)
    s = np.linalg.norm(vee(r - np.swapaxes(r, -1, -2)), axis=-1) / 2.0
    c = (np.trace(r, axis1=-2, axis2=-1) - 1.0) / 2.0
    return np.arctan2(s, c)


def encode_rot6d(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.concatenate([r[..., :, 0], r[..., :, 1]], axis=-1)


def decode_rot6d(r6: np.ndarray) -> np.ndarray:
    """Gram-Schmidt decode of the first two columns into a rotation matrix."""
    r6 = np.asarray(r6, dtype=float)
    a, b = r6[..., 0:3], r6[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < _DEGENERATE_NORM):
        raise DegenerateInput("first 6D column has (near) zero norm")
    c1 = a / na
    c3 = np.cross(c1, b)
    n3 = np.linalg.norm(c3, axis=-1, keepdims=True)
    if np.any(n3 < _DEGENERATE_NORM):
        raise DegenerateInput("6D columns are (near) parallel")
    c3 = c3 / n3
    c2 = np.cross(c3, c1)
    return np.stack([c1, c2, c3], axis=-1)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(r: np.ndarray) -> np.ndarray:
    """Angle of the twist of ``r`` about the world y (up) axis."""
    r = np.asarray(r, dtype=float)
    return np.arctan2(r[..., 0, 2] - r[..., 2, 0], r[..., 0, 0] + r[..., 2, 2])


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Closest rotation in the Frobenius sense (SVD projection)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, -1] *= d[..., None]
    return u @ vt


def mean_rotation(rs: np.ndarray) -> np.ndarray:
    """Chordal L2 mean of a stack of rotations ``(n, 3, 3)``."""
    return project_to_so3(np.asarray(rs, dtype=float).mean(axis=0))


def geodesic_interp(r0: np.ndarray, r1: np.ndarray, w: np.ndarray | float) -> np.ndarray:
    """Point at fraction ``w`` along the geodesic from ``r0`` to ``r1``."""
    w = np.asarray(w, dtype=float)
    delta = log_so3(np.swapaxes(r0, -1, -2) @ r1)
    return r0 @ exp_so3(delta * w[..., None])


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotations (Haar measure via QR)."""
    q, rr = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    q = q * np.sign(np.diagonal(rr, axis1=-2, axis2=-1))[:, None, :]
    det = np.linalg.det(q)
    q[det < 0, :, 0] *= -1.0
    return q


def is_rotation(r: np.ndarray, tol: float = 1e-6) -> bool:
    r = np.asarray(r, dtype=float)
    eye = np.eye(3)
    ortho = np.abs(np.swapaxes(r, -1, -2) @ r - eye).max() <= tol
    return bool(ortho and np.abs(np.linalg.det(r) - 1.0).max() <= tol)
