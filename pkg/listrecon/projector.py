"""
On-the-fly TOF list-mode projector (Joseph interpolation).

System-matrix rows are never stored: every forward or back projection recomputes
the row of each event inside the numba kernels. Events are split into a fixed
number of chunks that does not depend on the thread count; back-projection
accumulates one image per chunk and merges them in chunk order, so results are
bit-identical for any number of threads.

Row element for pixel j on event i:

    a_ij = eps_i * rho_ij * ds_i

where eps_i is the TOF weight of the step, rho_ij the linear interpolation
coefficient and ds_i the step length along the LOR.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from django.conf import settings
from numba import njit, prange

from .events import Event, EventList
from .exceptions import DimensionError, InvalidConfigError
from .geometry import ScannerGeometry, TofSpec, enumerate_lor_pairs
from .images import Image2D, ImageGrid
from .tof import tof_weight_scalar

logger = logging.getLogger(__name__)

# |ux| and |uy| closer than this are treated as a 45 degree LOR
TIE_TOLERANCE = 1e-9


def _toolkit_setting(key, default):
    return getattr(settings, 'LISTRECON', {}).get(key, default)


def set_threads(n_threads: Optional[int]) -> int:
    """Set the numba worker count; 0 or None keeps the current value."""
    if n_threads:
        n_threads = max(1, min(int(n_threads), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n_threads)
    return numba.get_num_threads()


@dataclass(frozen=True)
class SparseRow:
    indices: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.indices.shape[0]

    def dense(self, n_pixels: int) -> np.ndarray:
        out = np.zeros(n_pixels)
        out[self.indices] = self.weights
        return out


@dataclass
class ProjectionContext:
    """Everything the kernels need besides the image and the events."""

    geometry: ScannerGeometry
    grid: ImageGrid
    tof: TofSpec
    use_tof: bool = True
    cutoff: Optional[float] = None
    n_chunks: Optional[int] = None
    fov_diameter: Optional[float] = None
    _full_events: Optional[EventList] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.cutoff is None:
            self.cutoff = float(_toolkit_setting('TOF_WEIGHT_CUTOFF', 1e-6))
        if self.n_chunks is None:
            self.n_chunks = int(_toolkit_setting('PROJECTOR_CHUNKS', 64))
        if self.fov_diameter is None:
            self.fov_diameter = min(float(_toolkit_setting('FOV_DIAMETER', 255.0)),
                                    min(self.grid.P, self.grid.Q) * self.grid.spacing)

        if self.n_chunks < 1:
            raise InvalidConfigError(f"Projector chunk count must be >= 1, got {self.n_chunks}")
        if self.geometry.ring_radius <= self.grid.half_diagonal:
            raise InvalidConfigError(
                f"Ring radius {self.geometry.ring_radius} mm does not enclose the image "
                f"(half diagonal {self.grid.half_diagonal:.2f} mm)")
        if self.use_tof and self.tof.coverage < self.fov_diameter - 1e-9:
            raise InvalidConfigError(
                f"{self.tof.n_bins} TOF bins of {self.tof.bin_width} mm do not cover "
                f"the {self.fov_diameter:.1f} mm field of view")

    @property
    def max_row_length(self) -> int:
        return 2 * max(self.grid.P, self.grid.Q)

    def non_tof(self) -> 'ProjectionContext':
        return ProjectionContext(self.geometry, self.grid, self.tof, use_tof=False,
                                 cutoff=self.cutoff, n_chunks=self.n_chunks,
                                 fov_diameter=self.fov_diameter)

    def fov_mask(self) -> np.ndarray:
        return self.grid.fov_mask(self.fov_diameter)

    def kernel_args(self):
        return (self.grid.P, self.grid.Q, self.grid.spacing, self.tof.n_bins,
                self.tof.bin_width, self.tof.sigma_mm, self.cutoff, self.use_tof)

    def full_bin_events(self) -> EventList:
        """One event per enumerable TOF bin, unit multipliers.

        Bin id = lor * n_bins + b with LORs from the acceptance fan, a < b.
        """
        if self._full_events is None:
            a_idx, b_idx = enumerate_lor_pairs(self.geometry)
            if a_idx.shape[0] == 0:
                raise InvalidConfigError("Acceptance fan contains no crystal pairs")
            n_bins = self.tof.n_bins if self.use_tof else 1
            self._full_events = EventList(
                np.repeat(a_idx, n_bins),
                np.repeat(b_idx, n_bins),
                np.tile(np.arange(n_bins), a_idx.shape[0]),
            )
            logger.debug(f"Enumerated {a_idx.shape[0]} LORs x {n_bins} TOF bins")
        return self._full_events

    def chunk_count(self, n_events: int) -> int:
        return max(1, min(self.n_chunks, n_events))


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True)
def _row_kernel(ax, ay, bx, by, tof_bin, P, Q, d, n_bins, bin_width, sigma, cutoff,
                use_tof, idx_out, w_out):
    dx = bx - ax
    dy = by - ay
    length = np.sqrt(dx * dx + dy * dy)
    ux = dx / length
    uy = dy / length
    bin_offset = (tof_bin - (n_bins - 1) / 2.0) * bin_width

    aux = abs(ux)
    auy = abs(uy)
    if abs(aux - auy) < TIE_TOLERANCE:
        x_dominant = ux * uy > 0.0
    else:
        x_dominant = aux > auy

    if x_dominant:
        n_steps = P
        n_minor = Q
        a_major = ax
        a_minor = ay
        u_major = ux
        u_minor = uy
    else:
        n_steps = Q
        n_minor = P
        a_major = ay
        a_minor = ax
        u_major = uy
        u_minor = ux

    ds = d / abs(u_major)
    major_center = (n_steps - 1) / 2.0
    minor_center = (n_minor - 1) / 2.0

    n = 0
    for k in range(n_steps):
        c_major = (k - major_center) * d
        s = (c_major - a_major) / u_major
        c_minor = a_minor + s * u_minor
        f = c_minor / d + minor_center
        m0 = int(np.floor(f))
        if m0 < -1 or m0 > n_minor - 1:
            continue

        if use_tof:
            eps = tof_weight_scalar((s - 0.5 * length) - bin_offset, bin_width, sigma)
            if eps < cutoff:
                continue
        else:
            eps = 1.0

        frac = f - m0
        w0 = eps * (1.0 - frac) * ds
        w1 = eps * frac * ds
        if m0 >= 0 and w0 > 0.0:
            if x_dominant:
                idx_out[n] = m0 * P + k
            else:
                idx_out[n] = k * P + m0
            w_out[n] = w0
            n += 1
        if m0 + 1 <= n_minor - 1 and w1 > 0.0:
            if x_dominant:
                idx_out[n] = (m0 + 1) * P + k
            else:
                idx_out[n] = k * P + m0 + 1
            w_out[n] = w1
            n += 1
    return n


@njit(parallel=True, cache=True)
def _forward_kernel(xy, det_a, det_b, tof_bin, mult, img, P, Q, d, n_bins, bin_width,
                    sigma, cutoff, use_tof, n_chunks, out):
    n_events = det_a.shape[0]
    chunk = (n_events + n_chunks - 1) // n_chunks
    row_len = 2 * max(P, Q)
    for c in prange(n_chunks):
        idx = np.empty(row_len, np.int64)
        w = np.empty(row_len, np.float64)
        stop = min(n_events, (c + 1) * chunk)
        for t in range(c * chunk, stop):
            a = det_a[t]
            b = det_b[t]
            n = _row_kernel(xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1], tof_bin[t], P, Q, d,
                            n_bins, bin_width, sigma, cutoff, use_tof, idx, w)
            acc = 0.0
            for k in range(n):
                acc += w[k] * img[idx[k]]
            out[t] = mult[t] * acc


@njit(parallel=True, cache=True)
def _back_kernel(xy, det_a, det_b, tof_bin, mult, vals, P, Q, d, n_bins, bin_width,
                 sigma, cutoff, use_tof, n_chunks, acc):
    n_events = det_a.shape[0]
    chunk = (n_events + n_chunks - 1) // n_chunks
    row_len = 2 * max(P, Q)
    for c in prange(n_chunks):
        idx = np.empty(row_len, np.int64)
        w = np.empty(row_len, np.float64)
        stop = min(n_events, (c + 1) * chunk)
        for t in range(c * chunk, stop):
            v = mult[t] * vals[t]
            if v == 0.0:
                continue
            a = det_a[t]
            b = det_b[t]
            n = _row_kernel(xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1], tof_bin[t], P, Q, d,
                            n_bins, bin_width, sigma, cutoff, use_tof, idx, w)
            for k in range(n):
                acc[c, idx[k]] += w[k] * v


@njit(parallel=True, cache=True)
def _row_norm_kernel(xy, det_a, det_b, tof_bin, mult, P, Q, d, n_bins, bin_width, sigma,
                     cutoff, use_tof, n_chunks, out_l2, out_sum):
    n_events = det_a.shape[0]
    chunk = (n_events + n_chunks - 1) // n_chunks
    row_len = 2 * max(P, Q)
    for c in prange(n_chunks):
        idx = np.empty(row_len, np.int64)
        w = np.empty(row_len, np.float64)
        stop = min(n_events, (c + 1) * chunk)
        for t in range(c * chunk, stop):
            a = det_a[t]
            b = det_b[t]
            n = _row_kernel(xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1], tof_bin[t], P, Q, d,
                            n_bins, bin_width, sigma, cutoff, use_tof, idx, w)
            sq = 0.0
            sm = 0.0
            for k in range(n):
                sq += w[k] * w[k]
                sm += w[k]
            out_l2[t] = mult[t] * np.sqrt(sq)
            out_sum[t] = mult[t] * sm


# ---------------------------------------------------------------------------
# public operations

def _check_events(events: EventList, ctx: ProjectionContext) -> None:
    events.validate(ctx.geometry.n_crystals, ctx.tof.n_bins if ctx.use_tof else 1 << 16)


def compute_row(geom: ScannerGeometry, grid: ImageGrid, spec: TofSpec, ev: Event,
                use_tof: bool = True, cutoff: Optional[float] = None) -> SparseRow:
    """System-matrix row of one event, without its multiplier."""
    ctx = ProjectionContext(geom, grid, spec, use_tof=use_tof, cutoff=cutoff)
    return compute_row_in(ctx, ev)


def compute_row_in(ctx: ProjectionContext, ev: Event) -> SparseRow:
    _check_events(EventList.from_events([ev]), ctx)
    xy = ctx.geometry.crystal_xy
    idx = np.empty(ctx.max_row_length, np.int64)
    w = np.empty(ctx.max_row_length, np.float64)
    a, b = ev.det_a, ev.det_b
    n = _row_kernel(xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1], ev.tof_bin, *ctx.kernel_args(),
                    idx, w)
    return SparseRow(indices=idx[:n].copy(), weights=w[:n].copy())


def forward_project(img: Image2D, events: EventList, ctx: ProjectionContext) -> np.ndarray:
    """out[t] = multiplier_t * <row_t, img>."""
    img.check_grid(ctx.grid)
    _check_events(events, ctx)
    if not np.all(np.isfinite(img.values)):
        raise DimensionError("Image contains non-finite values")

    out = np.zeros(len(events))
    if len(events) == 0:
        return out
    _forward_kernel(ctx.geometry.crystal_xy, events.det_a, events.det_b, events.tof_bin,
                    events.multiplier, np.ascontiguousarray(img.values).ravel(),
                    *ctx.kernel_args(), ctx.chunk_count(len(events)), out)
    return out


def back_project(vals, events: EventList, grid: ImageGrid, ctx: ProjectionContext) -> Image2D:
    """img_j = sum_t multiplier_t * a_tj * vals[t]; adjoint of forward_project."""
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if vals.ndim != 1 or vals.shape[0] != len(events):
        raise DimensionError(f"Got {vals.shape[0] if vals.ndim == 1 else vals.shape} values "
                             f"for {len(events)} events")
    if grid != ctx.grid:
        raise DimensionError(f"Grid {grid} does not match projection context grid {ctx.grid}")
    _check_events(events, ctx)

    if len(events) == 0:
        return grid.zeros()
    n_chunks = ctx.chunk_count(len(events))
    acc = np.zeros((n_chunks, grid.n_pixels))
    _back_kernel(ctx.geometry.crystal_xy, events.det_a, events.det_b, events.tof_bin,
                 events.multiplier, vals, *ctx.kernel_args(), n_chunks, acc)
    # merge per-chunk images in chunk order
    total = acc[0].copy()
    for c in range(1, n_chunks):
        total += acc[c]
    return Image2D(total.reshape(grid.shape), grid.spacing)


def row_norms(events: EventList, ctx: ProjectionContext):
    """Per-event Euclidean norms and sums of the rows, multipliers included."""
    _check_events(events, ctx)
    l2 = np.zeros(len(events))
    sums = np.zeros(len(events))
    if len(events):
        _row_norm_kernel(ctx.geometry.crystal_xy, events.det_a, events.det_b, events.tof_bin,
                         events.multiplier, *ctx.kernel_args(), ctx.chunk_count(len(events)),
                         l2, sums)
    return l2, sums


def _full_multipliers(ctx: ProjectionContext, multipliers) -> np.ndarray:
    full = ctx.full_bin_events()
    n_bins = ctx.tof.n_bins if ctx.use_tof else 1
    if multipliers is None:
        return np.ones(len(full))
    multipliers = np.asarray(multipliers, dtype=np.float64)
    if multipliers.shape[0] == len(full):
        return multipliers
    if multipliers.shape[0] * n_bins == len(full):
        return np.repeat(multipliers, n_bins)
    raise DimensionError(f"Got {multipliers.shape[0]} multipliers for {len(full)} TOF bins")


def sensitivity_image(ctx: ProjectionContext, multipliers=None) -> Image2D:
    """s_j = sum_i m_i a_ij over every enumerable TOF bin.

    ``multipliers`` may be given per bin or per LOR (shared by its bins).
    """
    full = ctx.full_bin_events()
    m = _full_multipliers(ctx, multipliers)
    return back_project(m, full, ctx.grid, ctx)


def forward_project_full(img: Image2D, ctx: ProjectionContext, multipliers=None) -> np.ndarray:
    """Expected counts for every enumerable TOF bin, in full_bin_events order."""
    full = ctx.full_bin_events()
    m = _full_multipliers(ctx, multipliers)
    return forward_project(img, full.with_multiplier(m), ctx)
