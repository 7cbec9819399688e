"""
Image quality metrics: PSNR, global SSIM, CRC, background STD, bias and CNR.

Ensemble metrics take a list of S reconstructions (noise realizations). ROI specs
and masks are either shared by all realizations or given once per realization
when each realization has its own phantom.
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from .exceptions import DimensionError, InvalidMetricError
from .images import Image2D

# returned by psnr for identical images
PSNR_IDENTICAL = math.inf

# Number of background ROIs
DEFAULT_BACKGROUND_ROIS = 15


@dataclass
class RoiSpec:
    targets: List[np.ndarray]
    backgrounds: List[np.ndarray]
    a_true: float
    b_true: float
    shape: tuple = field(default=None)

    def __post_init__(self):
        for mask in self.targets + self.backgrounds:
            mask = np.asarray(mask, dtype=bool)
            if not mask.any():
                raise InvalidMetricError("ROI masks must be nonempty")
            if self.shape is not None and mask.shape != tuple(self.shape):
                raise DimensionError(f"ROI mask of shape {mask.shape} outside image {self.shape}")
        if not self.targets or not self.backgrounds:
            raise InvalidMetricError("Need at least one target and one background ROI")

    @property
    def target_union(self) -> np.ndarray:
        union = np.zeros_like(np.asarray(self.targets[0], dtype=bool))
        for mask in self.targets:
            union |= np.asarray(mask, dtype=bool)
        return union


def _values(img) -> np.ndarray:
    return img.values if isinstance(img, Image2D) else np.asarray(img, dtype=np.float64)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"Shapes differ: {a.shape} vs {b.shape}")


def rmse(recon, truth) -> float:
    a, b = _values(recon), _values(truth)
    _same_shape(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(recon, truth) -> float:
    """20 log10(max(truth) / RMSE); +inf for identical images."""
    a, b = _values(recon), _values(truth)
    _same_shape(a, b)
    peak = float(b.max())
    if not peak > 0:
        raise InvalidMetricError("PSNR needs a truth image with positive maximum")
    err = rmse(a, b)
    if err == 0:
        return PSNR_IDENTICAL
    return 20.0 * math.log10(peak / err)


def ssim(a, b) -> float:
    """Whole-image SSIM with C1 = 0.01 max(a) and C2 = 0.03 max(a)."""
    x, y = _values(a), _values(b)
    _same_shape(x, y)
    peak = float(x.max())
    if not peak > 0:
        raise InvalidMetricError("SSIM constants need an image with positive maximum")
    c1 = 0.01 * peak
    c2 = 0.03 * peak
    mx, my = x.mean(), y.mean()
    vx = ((x - mx) ** 2).mean()
    vy = ((y - my) ** 2).mean()
    cov = ((x - mx) * (y - my)).mean()
    return float((2 * mx * my + c1) * (2 * cov + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))


def _realizations(recons) -> List[np.ndarray]:
    arrays = [_values(r) for r in recons]
    if len(arrays) < 2:
        raise InvalidMetricError(f"Need at least 2 realizations, got {len(arrays)}")
    for arr in arrays[1:]:
        _same_shape(arrays[0], arr)
    return arrays


def _per_realization(items, n: int, kind: str) -> list:
    """Repeat a single ROI spec or mask, or check a per-realization list has length n."""
    if isinstance(items, (list, tuple)):
        if len(items) != n:
            raise InvalidMetricError(f"Got {len(items)} {kind} for {n} realizations")
        return list(items)
    return [items] * n


def crc(recons: Sequence, rois: Union[RoiSpec, Sequence[RoiSpec]]) -> float:
    """Mean over realizations of (a/b - 1) / (a_true/b_true - 1).

    ``rois`` may hold one RoiSpec per realization when each was drawn from its own phantom.
    """
    arrays = _realizations(recons)
    values = []
    for arr, spec in zip(arrays, _per_realization(rois, len(arrays), 'ROI specs')):
        true_contrast = spec.a_true / spec.b_true - 1.0
        if true_contrast == 0:
            raise InvalidMetricError("Target and background truth values are equal")
        a_mean = arr[spec.target_union].mean()
        b_mean = np.mean([arr[np.asarray(m, bool)].mean() for m in spec.backgrounds])
        if b_mean == 0:
            raise InvalidMetricError("Background mean is zero")
        values.append((a_mean / b_mean - 1.0) / true_contrast)
    return float(np.mean(values))


def background_std(recons: Sequence, rois: Union[RoiSpec, Sequence[RoiSpec]]) -> float:
    """Mean over background ROIs of std/mean of the ROI mean across realizations."""
    arrays = _realizations(recons)
    specs = _per_realization(rois, len(arrays), 'ROI specs')
    n_rois = len(specs[0].backgrounds)
    if any(len(spec.backgrounds) != n_rois for spec in specs):
        raise InvalidMetricError("Realizations have different numbers of background ROIs")
    per_roi = []
    for k in range(n_rois):
        b = np.array([arr[np.asarray(spec.backgrounds[k], bool)].mean() for arr, spec in zip(arrays, specs)])
        mean = b.mean()
        if mean == 0:
            raise InvalidMetricError("Background ROI mean is zero")
        per_roi.append(b.std(ddof=1) / mean)
    return float(np.mean(per_roi))


def bias(recons: Sequence, target_mask, truth_value: float) -> float:
    """(A - B) / B with A the mean over realizations of the target-region mean.

    ``target_mask`` is one mask, or a list with one mask per realization.
    """
    if truth_value == 0:
        raise InvalidMetricError("Truth value of the target region is zero")
    arrays = [_values(r) for r in recons]
    if not arrays:
        raise InvalidMetricError("Need at least one realization")
    masks = _per_realization(target_mask, len(arrays), 'target masks')
    a = float(np.mean([arr[np.asarray(mask, bool)].mean() for arr, mask in zip(arrays, masks)]))
    return (a - truth_value) / truth_value


def cnr(recon, roi_mask, background_mask) -> float:
    """(mean_roi - mean_bg) / std_bg."""
    x = _values(recon)
    roi = x[np.asarray(roi_mask, bool)]
    bg = x[np.asarray(background_mask, bool)]
    std = bg.std()
    if std == 0:
        raise InvalidMetricError("Background standard deviation is zero")
    return float((roi.mean() - bg.mean()) / std)
