"""
Phantoms and Poisson list-mode simulation.

Expected counts per TOF bin are

    lambda_i = scale * m_i * (A blur(activity))_i + r

with a flat contamination r. ``scale`` makes the total expectation equal to the
target count and r makes the contamination share equal to the configured fraction.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import ndimage

from .events import EventList
from .exceptions import InvalidConfigError, InvalidSimulationError
from .geometry import FWHM_TO_SIGMA, TofSpec
from .images import Image2D, ImageGrid
from .projector import ProjectionContext, forward_project_full

logger = logging.getLogger(__name__)

# Uptake values
GM_MEAN, GM_STD = 96.0, 5.0
WM_MEAN, WM_STD = 32.0, 5.0
HOT_LESION = 144.0
COLD_LESION = 48.0
LESION_RADIUS_RANGE = (2.0, 8.0)

# Water-equivalent linear attenuation, 1/mm
MU_WATER = 0.0096

PHANTOM_KINDS = ('ellipse-brain', 'disks')

DEFAULT_GRID = ImageGrid(P=128, Q=128, spacing=2.086)


@dataclass
class Phantom:
    activity: Image2D
    attenuation: Image2D
    roi_masks: Dict[str, List[np.ndarray]]
    gm_value: float
    wm_value: float
    kind: str
    seed: int

    @property
    def grid(self) -> ImageGrid:
        return self.activity.grid

    def truth_values(self) -> dict:
        return {
            'hot': HOT_LESION,
            'cold': COLD_LESION,
            'background': self.gm_value,
            'gm': self.gm_value,
            'wm': self.wm_value,
        }


@dataclass
class SimConfig:
    target_counts: int
    tof: TofSpec
    contamination_fraction: float = 0.20
    psf_fwhm: float = 4.0
    seed: int = 0
    attenuation: bool = True

    def __post_init__(self):
        if self.target_counts < 1:
            raise InvalidConfigError(f"target_counts must be >= 1, got {self.target_counts}")
        if not 0.0 <= self.contamination_fraction < 1.0:
            raise InvalidConfigError(
                f"contamination_fraction must be in [0, 1), got {self.contamination_fraction}")
        if self.psf_fwhm < 0:
            raise InvalidConfigError(f"psf_fwhm must be >= 0, got {self.psf_fwhm}")


@dataclass
class SimulationResult:
    events: EventList
    contamination_mean: float
    lambda_scale: float
    expected_total: float
    n_bins_total: int
    multipliers: np.ndarray = field(repr=False)


def _ellipse(x, y, cx, cy, ax, ay):
    return ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 <= 1.0


def _disk_mask(x, y, cx, cy, radius, grid: ImageGrid):
    mask = (x - cx) ** 2 + (y - cy) ** 2 <= radius ** 2
    # always keep the centre pixel
    p = int(np.clip(np.rint(cx / grid.spacing + (grid.P - 1) / 2.0), 0, grid.P - 1))
    q = int(np.clip(np.rint(cy / grid.spacing + (grid.Q - 1) / 2.0), 0, grid.Q - 1))
    mask[q, p] = True
    return mask


def _place_disks(rng, x, y, region, radii, grid, forbidden, disjoint, max_tries=5000):
    """Rejection-sample disk centres whose whole disk lies in ``region``."""
    ys, xs = np.nonzero(region)
    if xs.size == 0:
        raise InvalidConfigError("Phantom region is empty on this grid")
    masks = []
    taken = forbidden.copy()
    for radius in radii:
        for _ in range(max_tries):
            k = rng.integers(xs.size)
            cx, cy = x[ys[k], xs[k]], y[ys[k], xs[k]]
            mask = _disk_mask(x, y, cx, cy, radius, grid)
            if np.all(region[mask]) and not np.any(taken[mask]):
                break
        else:
            raise InvalidConfigError(
                f"Could not place a {radius:.1f} mm disk after {max_tries} tries; grid too small")
        masks.append(mask)
        if disjoint:
            taken |= mask
    return masks


def make_phantom(kind: str = 'ellipse-brain', rng_seed: int = 0,
                 grid: Optional[ImageGrid] = None, n_hot: int = 2, n_cold: int = 2,
                 n_background: int = 15, background_radius: float = 4.0) -> Phantom:
    """Piecewise-constant activity phantom with ROI masks.

    GM and WM uptakes are drawn once per phantom; lesions sit inside the GM region
    and the background ROIs are GM disks that avoid the lesions.
    """
    if kind not in PHANTOM_KINDS:
        raise InvalidConfigError(f"Unknown phantom kind '{kind}', expected one of {PHANTOM_KINDS}")
    grid = grid or DEFAULT_GRID
    rng = np.random.Generator(np.random.PCG64(rng_seed))

    x, y = grid.pixel_centers()
    half_w = 0.5 * grid.P * grid.spacing
    half_h = 0.5 * grid.Q * grid.spacing

    if kind == 'ellipse-brain':
        head = _ellipse(x, y, 0.0, 0.0, 0.80 * half_w, 0.92 * half_h)
        gm = _ellipse(x, y, 0.0, 0.0, 0.72 * half_w, 0.84 * half_h)
        wm = (_ellipse(x, y, -0.28 * half_w, 0.0, 0.18 * half_w, 0.40 * half_h)
              | _ellipse(x, y, 0.28 * half_w, 0.0, 0.18 * half_w, 0.40 * half_h))
    else:
        radius = 0.80 * min(half_w, half_h)
        head = _ellipse(x, y, 0.0, 0.0, radius, radius)
        gm = _ellipse(x, y, 0.0, 0.0, 0.92 * radius, 0.92 * radius)
        wm = _ellipse(x, y, 0.0, 0.0, 0.30 * radius, 0.30 * radius)
    gm &= ~wm

    gm_value = float(rng.normal(GM_MEAN, GM_STD))
    wm_value = float(rng.normal(WM_MEAN, WM_STD))

    activity = np.zeros(grid.shape)
    activity[gm] = gm_value
    activity[wm] = wm_value

    # small toy grids cannot hold 8 mm lesions next to each other
    r_max = min(LESION_RADIUS_RANGE[1], max(LESION_RADIUS_RANGE[0], 0.08 * min(half_w, half_h) * 2))
    radii = rng.uniform(LESION_RADIUS_RANGE[0], r_max, size=n_hot + n_cold)
    lesions = _place_disks(rng, x, y, gm, radii, grid, np.zeros(grid.shape, bool), disjoint=True)
    hot, cold = lesions[:n_hot], lesions[n_hot:]
    for mask in hot:
        activity[mask] = HOT_LESION
    for mask in cold:
        activity[mask] = COLD_LESION

    lesion_union = np.zeros(grid.shape, bool)
    for mask in lesions:
        lesion_union |= mask
    background = _place_disks(rng, x, y, gm, [background_radius] * n_background, grid,
                              lesion_union, disjoint=False)

    mu = np.where(head, MU_WATER, 0.0)
    logger.debug(f"Made {kind} phantom (seed {rng_seed}): GM {gm_value:.2f}, WM {wm_value:.2f}")
    return Phantom(
        activity=Image2D(activity, grid.spacing),
        attenuation=Image2D(mu, grid.spacing),
        roi_masks={'hot': hot, 'cold': cold, 'background': background,
                   'gm': [gm & ~lesion_union], 'wm': [wm]},
        gm_value=gm_value,
        wm_value=wm_value,
        kind=kind,
        seed=rng_seed,
    )


def psf_blur(img: Image2D, fwhm: float) -> Image2D:
    """Gaussian blur with reflective boundaries; fwhm in mm, 0 is the identity."""
    if fwhm < 0:
        raise InvalidConfigError(f"PSF fwhm must be >= 0, got {fwhm}")
    if fwhm == 0:
        return img.copy()
    sigma = fwhm / FWHM_TO_SIGMA / img.spacing
    return Image2D(ndimage.gaussian_filter(img.values, sigma=sigma, mode='reflect'), img.spacing)


def attenuation_multipliers(phantom: Phantom, ctx: ProjectionContext) -> np.ndarray:
    """exp(-line integral of mu) for every enumerated LOR, in full_bin_events LOR order."""
    mu = phantom.attenuation.values
    if not np.all(np.isfinite(mu)) or np.any(mu < 0):
        raise InvalidConfigError("Attenuation map must be finite and nonnegative")
    line_integrals = forward_project_full(phantom.attenuation, ctx.non_tof())
    return np.exp(-line_integrals)


def lor_multipliers(phantom: Phantom, ctx: ProjectionContext, attenuation: bool = True) -> np.ndarray:
    """Per-LOR multipliers at the float32 precision the event files store."""
    if attenuation:
        m = attenuation_multipliers(phantom, ctx)
    else:
        m = np.ones(len(ctx.non_tof().full_bin_events()))
    return m.astype(np.float32).astype(np.float64)


def sample_listmode(phantom: Phantom, cfg: SimConfig, ctx: ProjectionContext,
                    noise_seed: Optional[int] = None,
                    multipliers: Optional[np.ndarray] = None) -> SimulationResult:
    """Draw one Poisson realization of list-mode events.

    ``multipliers`` (per LOR) can be passed in to reuse them across realizations.
    """
    if multipliers is None:
        multipliers = lor_multipliers(phantom, ctx, cfg.attenuation)
    seed = cfg.seed if noise_seed is None else noise_seed
    rng = np.random.Generator(np.random.PCG64(seed))

    lam, scale, contamination = _expectation(phantom, cfg, ctx, multipliers)
    n_bins_total = lam.shape[0]

    counts = rng.poisson(lam)
    bin_ids = np.repeat(np.arange(n_bins_total), counts)
    bin_ids = bin_ids[rng.permutation(bin_ids.shape[0])]

    full = ctx.full_bin_events()
    per_bin = np.repeat(multipliers, ctx.tof.n_bins)
    events = EventList(full.det_a[bin_ids], full.det_b[bin_ids], full.tof_bin[bin_ids],
                       per_bin[bin_ids])
    logger.info(f"Sampled {len(events)} events (target {cfg.target_counts}, "
                f"{n_bins_total} TOF bins, contamination {contamination:.3e}/bin)")
    return SimulationResult(
        events=events,
        contamination_mean=contamination,
        lambda_scale=scale,
        expected_total=float(lam.sum()),
        n_bins_total=n_bins_total,
        multipliers=multipliers,
    )


def _expectation(phantom, cfg, ctx, multipliers):
    expected = forward_project_full(psf_blur(phantom.activity, cfg.psf_fwhm), ctx, multipliers)
    total = float(expected.sum())
    if not total > 0:
        raise InvalidSimulationError("Expected counts are zero for every TOF bin")
    f = cfg.contamination_fraction
    scale = cfg.target_counts * (1.0 - f) / total
    contamination = f * cfg.target_counts / expected.shape[0]
    return scale * expected + contamination, scale, contamination


def expected_counts(phantom: Phantom, cfg: SimConfig, ctx: ProjectionContext,
                    multipliers: Optional[np.ndarray] = None) -> np.ndarray:
    """lambda for every TOF bin, without sampling."""
    if multipliers is None:
        multipliers = lor_multipliers(phantom, ctx, cfg.attenuation)
    return _expectation(phantom, cfg, ctx, multipliers)[0]
