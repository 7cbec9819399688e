"""Pixel grids and 2D images."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvalidConfigError


@dataclass(frozen=True)
class ImageGrid:
    """P columns by Q rows of square pixels, centred on the scanner axis.

    Pixel (p, q) has its centre at ((p - (P-1)/2)*spacing, (q - (Q-1)/2)*spacing)
    and flat index j = q*P + p.
    """

    P: int
    Q: int
    spacing: float

    def __post_init__(self):
        if self.P < 1 or self.Q < 1:
            raise InvalidConfigError(f"Grid must have at least one pixel, got {self.P}x{self.Q}")
        if not self.spacing > 0:
            raise InvalidConfigError(f"Pixel spacing must be positive, got {self.spacing}")

    @property
    def shape(self):
        return (self.Q, self.P)

    @property
    def n_pixels(self) -> int:
        return self.P * self.Q

    @property
    def half_diagonal(self) -> float:
        return 0.5 * self.spacing * float(np.hypot(self.P, self.Q))

    def pixel_centers(self):
        """(x, y) coordinate arrays, each of shape (Q, P)."""
        xs = (np.arange(self.P) - (self.P - 1) / 2.0) * self.spacing
        ys = (np.arange(self.Q) - (self.Q - 1) / 2.0) * self.spacing
        return np.meshgrid(xs, ys)

    def fov_mask(self, diameter: float) -> np.ndarray:
        x, y = self.pixel_centers()
        return (x ** 2 + y ** 2) <= (0.5 * diameter) ** 2

    def zeros(self) -> 'Image2D':
        return Image2D(np.zeros(self.shape), self.spacing)

    def as_dict(self) -> dict:
        return {'P': int(self.P), 'Q': int(self.Q), 'spacing': float(self.spacing)}


class Image2D:
    """A (Q, P) float64 array with its pixel spacing in mm."""

    __slots__ = ('values', 'spacing')

    def __init__(self, values, spacing: float):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"Image values must be 2D, got shape {values.shape}")
        if not spacing > 0:
            raise InvalidConfigError(f"Pixel spacing must be positive, got {spacing}")
        self.values = values
        self.spacing = float(spacing)

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid(P=self.values.shape[1], Q=self.values.shape[0], spacing=self.spacing)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def copy(self) -> 'Image2D':
        return Image2D(self.values.copy(), self.spacing)

    def check_grid(self, grid: ImageGrid) -> None:
        if self.values.shape != grid.shape:
            raise DimensionError(f"Image of shape {self.values.shape} does not match grid {grid.shape}")

    def __repr__(self):
        Q, P = self.values.shape
        return f"Image2D({P}x{Q}, spacing={self.spacing})"
