"""
Isotropic total variation on (Q, P) images.

Forward differences with a Neumann (reflective) boundary: the difference past the
last row or column is zero.
"""

import numpy as np

from .exceptions import InvalidConfigError
from .images import Image2D

# ||grad|| <= sqrt(ndim * 4) for forward differences
GRADIENT_NORM = np.sqrt(8.0)


def _values(img):
    return img.values if isinstance(img, Image2D) else np.asarray(img, dtype=np.float64)


def gradient(x: np.ndarray) -> np.ndarray:
    """Forward differences, shape (2, Q, P): [d/dp, d/dq]."""
    g = np.zeros((2,) + x.shape)
    g[0, :, :-1] = x[:, 1:] - x[:, :-1]
    g[1, :-1, :] = x[1:, :] - x[:-1, :]
    return g


def gradient_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of ``gradient`` (negative divergence)."""
    out = np.zeros(g.shape[1:])
    out[:, :-1] -= g[0, :, :-1]
    out[:, 1:] += g[0, :, :-1]
    out[:-1, :] -= g[1, :-1, :]
    out[1:, :] += g[1, :-1, :]
    return out


def tv_value(img, delta: float = 0.0) -> float:
    """sum sqrt(dx^2 + dy^2 + delta^2); delta = 0 gives the plain TV."""
    g = gradient(_values(img))
    return float(np.sqrt(g[0] ** 2 + g[1] ** 2 + delta ** 2).sum())


def tv_grad_smooth(img, delta: float):
    """Gradient of tv_value(img, delta); returns the same type it is given."""
    if not delta > 0:
        raise InvalidConfigError(f"delta must be positive, got {delta}")
    x = _values(img)
    g = gradient(x)
    norm = np.sqrt(g[0] ** 2 + g[1] ** 2 + delta ** 2)
    grad = gradient_adjoint(g / norm)
    if isinstance(img, Image2D):
        return Image2D(grad, img.spacing)
    return grad


def project_dual_ball(y: np.ndarray, radius: float) -> np.ndarray:
    """Pointwise projection of a (2, Q, P) field onto the ball of the given radius.

    This is the prox of the convex conjugate of radius * ||.||_{2,1}.
    """
    norm = np.sqrt(y[0] ** 2 + y[1] ** 2)
    return y / np.maximum(1.0, norm / radius)
