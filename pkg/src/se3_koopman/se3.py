"""SO(3) utilities: hat/vee, exponential/logarithm, projection, vectorization.

Conventions used across the package:

* 3x3 matrices are ``numpy`` arrays indexed ``M[row, col]``.
* Rotation matrices map body-frame vectors to the inertial frame.
* ``vectorize`` stacks columns (Fortran order), so ``vectorize(M)[3*j + i]``
  is ``M[i, j]``.
"""

from __future__ import annotations

import numpy as np

from .errors import NonSkewInputError, SingularProjectionError

SKEW_TOL = 1e-8
# Below this angle the closed-form ratios are replaced by Taylor series.
_SMALL_ANGLE = 1e-4
# Within this distance of pi the axis is taken from the symmetric part.
_NEAR_PI = 1e-3


def hat(a) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(a) @ b == np.cross(a, b)``."""
    x, y, z = (float(c) for c in a)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(H, tol: float = SKEW_TOL) -> np.ndarray:
    """Inverse of :func:`hat`.

    Raises
    ------
    NonSkewInputError
        If ``||H + H^T||_F > tol``.
    """
    H = np.asarray(H, dtype=float)
    asym = np.linalg.norm(H + H.T)
    if not asym <= tol:
        raise NonSkewInputError(f"matrix is not skew-symmetric: ||H + H^T||_F = {asym:.3e}")
    return np.array([H[2, 1], H[0, 2], H[1, 0]])


def skew_part(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return 0.5 * (H - H.T)


def so3_exp(w) -> np.ndarray:
    """Rodrigues formula for ``expm(hat(w))``."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = hat(w)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R) -> np.ndarray:
    """Principal matrix logarithm of a rotation, returned as a skew matrix.

    The rotation angle ``||vee(log R)||`` lies in ``[0, pi]``. Near zero the
    ratio ``theta / (2 sin theta)`` uses its Taylor expansion; near ``pi``
    the axis is read from the symmetric part ``(R + R^T) / 2``.
    """
    R = np.asarray(R, dtype=float)
    S = R - R.T
    s = np.array([S[2, 1], S[0, 2], S[1, 0]])  # 2 sin(theta) * axis
    sin_t = 0.5 * np.linalg.norm(s)
    cos_t = 0.5 * (np.trace(R) - 1.0)
    theta = float(np.arctan2(sin_t, cos_t))

    if theta < _SMALL_ANGLE:
        w = (0.5 + theta * theta / 12.0) * s
    elif np.pi - theta < _NEAR_PI:
        # R + R^T = 2 I + 2 (1 - cos) (a a^T - I)
        aat = (0.5 * (R + R.T) - cos_t * np.eye(3)) / (1.0 - cos_t)
        k = int(np.argmax(np.diag(aat)))
        axis = aat[:, k] / np.sqrt(max(aat[k, k], 0.0))
        axis /= np.linalg.norm(axis)
        if axis @ s < 0.0:
            axis = -axis
        w = theta * axis
    else:
        w = (theta / (2.0 * sin_t)) * s
    return hat(w)


def so3_log_vec(R) -> np.ndarray:
    """Rotation vector ``Theta = log(R)^vee``."""
    return vee(so3_log(R))


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation in Frobenius norm (orthogonal polar factor).

    Raises
    ------
    SingularProjectionError
        If ``M`` is numerically rank deficient or non-finite.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise SingularProjectionError("cannot project a non-finite matrix onto SO(3)")
    U, svals, Vt = np.linalg.svd(M)
    if svals[0] == 0.0 or svals[-1] <= 1e-12 * svals[0]:
        raise SingularProjectionError(f"matrix is rank deficient (singular values {svals})")
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    ortho = np.linalg.norm(R.T @ R - np.eye(3))
    return bool(ortho <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def vectorize(M) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def devectorize(v, n: int = 3) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((n, n), order="F")
