"""
Scanner geometry for a single 2D detector ring.

Crystals are points on a circle; a coincidence between two crystals defines a
line of response (LOR), and a TOF bin selects a segment of that line.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .exceptions import (
    BinIndexError,
    DegenerateLorError,
    DetectorIndexError,
    InvalidConfigError,
)

logger = logging.getLogger(__name__)

# Speed of light in mm/ps
C_MM_PER_PS = 0.299792458

# FWHM / sigma of a Gaussian
FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# TOF bin widths (mm) used for the supported bin counts; all cover a 255 mm object
SUPPORTED_TOF_BINS = {
    5: 51.0,
    11: 23.2,
    17: 15.0,
}


@dataclass(frozen=True)
class ScannerGeometry:
    """A ring of ``n_modules * crystals_per_module`` point crystals."""

    ring_radius: float
    n_modules: int
    crystals_per_module: int
    crystal_width: float
    crystal_xy: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = np.arange(self.n_crystals, dtype=np.float64)
        angles = 2.0 * np.pi * (k + 0.5) / self.n_crystals
        xy = np.empty((self.n_crystals, 2), dtype=np.float64)
        xy[:, 0] = self.ring_radius * np.cos(angles)
        xy[:, 1] = self.ring_radius * np.sin(angles)
        xy.setflags(write=False)
        object.__setattr__(self, 'crystal_xy', xy)

    @property
    def n_crystals(self) -> int:
        return self.n_modules * self.crystals_per_module

    def crystal_angle(self, k: int) -> float:
        return 2.0 * math.pi * (k + 0.5) / self.n_crystals

    def crystal_position(self, k: int) -> np.ndarray:
        self.check_index(k)
        return self.crystal_xy[k]

    def check_index(self, k: int) -> None:
        if not 0 <= int(k) < self.n_crystals:
            raise DetectorIndexError(f"Crystal index {k} outside [0, {self.n_crystals})")

    def as_dict(self) -> dict:
        return {
            'ring_radius': float(self.ring_radius),
            'n_modules': int(self.n_modules),
            'crystals_per_module': int(self.crystals_per_module),
            'crystal_width': float(self.crystal_width),
        }


@dataclass(frozen=True)
class TofSpec:
    """Timing resolution and TOF binning of the scanner."""

    fwhm_ps: float
    n_bins: int
    bin_width: float

    def __post_init__(self):
        if self.fwhm_ps <= 0:
            raise InvalidConfigError(f"TOF resolution must be positive, got {self.fwhm_ps} ps")
        if self.n_bins < 1 or self.n_bins % 2 == 0:
            raise InvalidConfigError(f"Number of TOF bins must be odd and >= 1, got {self.n_bins}")
        if self.bin_width <= 0:
            raise InvalidConfigError(f"TOF bin width must be positive, got {self.bin_width} mm")

    @property
    def fwhm_mm(self) -> float:
        # the time difference localises the annihilation at half the distance
        return C_MM_PER_PS * self.fwhm_ps / 2.0

    @property
    def sigma_mm(self) -> float:
        return self.fwhm_mm / FWHM_TO_SIGMA

    @property
    def coverage(self) -> float:
        return self.n_bins * self.bin_width

    @classmethod
    def for_bins(cls, fwhm_ps: float, n_bins: int, fov_diameter: float = 255.0) -> 'TofSpec':
        """Build a spec with the standard bin width for ``n_bins``.

        Unsupported odd bin counts split the field of view evenly.
        """
        bin_width = SUPPORTED_TOF_BINS.get(int(n_bins))
        if bin_width is None:
            bin_width = fov_diameter / n_bins
            logger.debug(f"No standard width for {n_bins} TOF bins, using {bin_width:.3f} mm")
        return cls(fwhm_ps=float(fwhm_ps), n_bins=int(n_bins), bin_width=float(bin_width))

    def as_dict(self) -> dict:
        return {
            'fwhm_ps': float(self.fwhm_ps),
            'n_bins': int(self.n_bins),
            'bin_width': float(self.bin_width),
        }


@dataclass(frozen=True)
class Lor:
    """A line of response between two points (mm)."""

    endpoint_a: Tuple[float, float]
    endpoint_b: Tuple[float, float]

    def __post_init__(self):
        if self.length <= 0.0:
            raise DegenerateLorError("LOR endpoints coincide")

    @property
    def length(self) -> float:
        return math.hypot(self.endpoint_b[0] - self.endpoint_a[0],
                          self.endpoint_b[1] - self.endpoint_a[1])

    @property
    def direction(self) -> Tuple[float, float]:
        length = self.length
        return ((self.endpoint_b[0] - self.endpoint_a[0]) / length,
                (self.endpoint_b[1] - self.endpoint_a[1]) / length)

    @property
    def midpoint(self) -> Tuple[float, float]:
        return (0.5 * (self.endpoint_a[0] + self.endpoint_b[0]),
                0.5 * (self.endpoint_a[1] + self.endpoint_b[1]))


def build_scanner(n_modules: int, crystals_per_module: int, ring_radius: float,
                  crystal_width: float) -> ScannerGeometry:
    """Build a uniform detector ring.

    Crystal k sits at angle 2*pi*(k + 0.5)/K, K = n_modules * crystals_per_module.
    """
    for name, value in (('n_modules', n_modules), ('crystals_per_module', crystals_per_module),
                        ('ring_radius', ring_radius), ('crystal_width', crystal_width)):
        if not value > 0:
            raise InvalidConfigError(f"{name} must be positive, got {value}")

    geom = ScannerGeometry(
        ring_radius=float(ring_radius),
        n_modules=int(n_modules),
        crystals_per_module=int(crystals_per_module),
        crystal_width=float(crystal_width),
    )
    logger.debug(f"Built scanner with {geom.n_crystals} crystals on a {ring_radius} mm ring")
    return geom


def lor_of(geom: ScannerGeometry, det_a: int, det_b: int) -> Lor:
    """Line of response from crystal ``det_a`` to crystal ``det_b``."""
    geom.check_index(det_a)
    geom.check_index(det_b)
    if det_a == det_b:
        raise DegenerateLorError(f"Crystal {det_a} cannot be in coincidence with itself")

    a = geom.crystal_xy[det_a]
    b = geom.crystal_xy[det_b]
    return Lor(endpoint_a=(float(a[0]), float(a[1])), endpoint_b=(float(b[0]), float(b[1])))


def tof_bin_offset(spec: TofSpec, bin_index: int) -> float:
    """Signed distance (mm) of a bin centre from the LOR midpoint."""
    if not 0 <= bin_index < spec.n_bins:
        raise BinIndexError(f"TOF bin {bin_index} outside [0, {spec.n_bins})")
    return (bin_index - (spec.n_bins - 1) / 2.0) * spec.bin_width


def tof_bin_center(lor: Lor, spec: TofSpec, bin_index: int) -> Tuple[float, float]:
    """Centre of a TOF bin, measured along the LOR from its midpoint."""
    offset = tof_bin_offset(spec, bin_index)
    mx, my = lor.midpoint
    ux, uy = lor.direction
    return (mx + offset * ux, my + offset * uy)


def enumerate_lor_pairs(geom: ScannerGeometry,
                        min_angle: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """All crystal pairs (a < b) subtending at least ``min_angle`` radians.

    The default acceptance fan keeps pairs at least 90 degrees apart, which are the
    LORs that can cross the field of view.
    """
    if min_angle is None:
        min_angle = math.pi / 2.0

    n = geom.n_crystals
    min_sep = int(math.ceil(min_angle * n / (2.0 * math.pi) - 1e-9))
    a_idx, b_idx = np.triu_indices(n, k=1)
    sep = b_idx - a_idx
    sep = np.minimum(sep, n - sep)
    keep = sep >= max(min_sep, 1)
    return a_idx[keep].astype(np.int64), b_idx[keep].astype(np.int64)
