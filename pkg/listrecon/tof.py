"""
Gaussian TOF kernel.

The weight of a TOF bin is the mass of a Gaussian (std ``sigma``) that falls in a
window of width ``omega`` centred ``d`` away from the sample point. The error
function is replaced by a closed-form approximation that is cheap inside the
projector kernels.
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from .exceptions import InvalidKernelError

logger = logging.getLogger(__name__)

ERF_A = 0.14
FOUR_OVER_PI = 4.0 / math.pi
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TofKernelInput:
    d_tof: float
    omega_tof: float
    sigma_tof: float

    def __post_init__(self):
        if not self.omega_tof > 0:
            raise InvalidKernelError(f"TOF bin width must be positive, got {self.omega_tof}")
        if not self.sigma_tof > 0:
            raise InvalidKernelError(f"TOF sigma must be positive, got {self.sigma_tof}")


@njit(cache=True)
def erf_scalar(x):
    if x == 0.0:
        return 0.0
    x2 = x * x
    ax2 = ERF_A * x2
    val = math.sqrt(1.0 - math.exp(-x2 * (FOUR_OVER_PI + ax2) / (1.0 + ax2)))
    return val if x > 0.0 else -val


@njit(cache=True)
def tof_weight_scalar(d, omega, sigma):
    scale = 1.0 / (SQRT2 * sigma)
    return 0.5 * (erf_scalar((d + 0.5 * omega) * scale) - erf_scalar((d - 0.5 * omega) * scale))


@njit(cache=True)
def _erf_array(x, out):
    for i in range(x.size):
        out[i] = erf_scalar(x[i])


def erf_approx(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Approximate erf(x); works on scalars and arrays.

    Absolute error stays below 1e-3 on the whole real line, and erf_approx(0) is 0.
    """
    if np.ndim(x) == 0:
        return float(erf_scalar(float(x)))

    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    _erf_array(arr.ravel(), out.ravel())
    return out


def tof_weight(kernel: TofKernelInput) -> float:
    """TOF weight in [0, 1] for one sample point and one bin."""
    return float(tof_weight_scalar(float(kernel.d_tof), float(kernel.omega_tof),
                                   float(kernel.sigma_tof)))
