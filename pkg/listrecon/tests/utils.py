"""
Small fixtures shared by the test modules.

The toy scanner is one module of 32 crystals on a 40 mm ring around an 8x8 grid
of 2 mm pixels, which keeps dense system-matrix references cheap.
"""

import numpy as np

from listrecon.events import EventList
from listrecon.geometry import TofSpec, build_scanner, lor_of, tof_bin_center
from listrecon.images import Image2D, ImageGrid
from listrecon.projector import ProjectionContext, compute_row_in, forward_project_full
from listrecon.tof import TofKernelInput, tof_weight


def small_context(tof_ps=60.0, n_bins=5, bin_width=4.0, P=8, Q=8, spacing=2.0, use_tof=True):
    geom = build_scanner(1, 32, 40.0, 4.0)
    return ProjectionContext(geom, ImageGrid(P, Q, spacing), TofSpec(tof_ps, n_bins, bin_width),
                             use_tof=use_tof)


def disc_image(grid, radius=5.0, value=1.0):
    x, y = grid.pixel_centers()
    return Image2D(np.where(x ** 2 + y ** 2 <= radius ** 2, value, 0.0), grid.spacing)


def random_image(grid, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    return Image2D(rng.random(grid.shape), grid.spacing)


def sample_events(ctx, img, counts=2000, seed=0):
    """Poisson events from every TOF bin with mean proportional to A img."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lam = forward_project_full(img, ctx)
    lam = lam * counts / lam.sum()
    ids = np.repeat(np.arange(lam.shape[0]), rng.poisson(lam))
    ids = ids[rng.permutation(ids.shape[0])]
    return ctx.full_bin_events().take(ids)


def dense_matrix(ctx, events: EventList):
    """One dense row per event, multipliers included."""
    A = np.zeros((len(events), ctx.grid.n_pixels))
    for t, ev in enumerate(events):
        row = compute_row_in(ctx, ev)
        A[t, row.indices] += ev.multiplier * row.weights
    return A


def toy_scanner_context(tof_ps=200.0, n_bins=5):
    """64 crystals on a 120 mm ring around a 32x32 grid of 4 mm pixels."""
    geom = build_scanner(4, 16, 120.0, 4.0)
    return ProjectionContext(geom, ImageGrid(32, 32, 4.0), TofSpec.for_bins(tof_ps, n_bins))


def quadrature_row(ctx, ev, substeps=1000):
    """Dense system-matrix row by fine-step integration along the LOR.

    The dominant axis is cut into sub-steps of spacing/substeps. Each sub-step
    carries the TOF weight at the centre crossing of its pixel slab and a tent
    basis across the minor axis at that crossing.
    """
    lor = lor_of(ctx.geometry, ev.det_a, ev.det_b)
    (ax, ay), (ux, uy) = lor.endpoint_a, lor.direction
    grid = ctx.grid
    d = grid.spacing

    if abs(abs(ux) - abs(uy)) < 1e-9:
        x_dominant = ux * uy > 0.0
    else:
        x_dominant = abs(ux) > abs(uy)
    if x_dominant:
        n_major, n_minor, a_major, a_minor, u_major, u_minor = grid.P, grid.Q, ax, ay, ux, uy
    else:
        n_major, n_minor, a_major, a_minor, u_major, u_minor = grid.Q, grid.P, ay, ax, uy, ux

    edge = -0.5 * n_major * d
    h = d / substeps
    samples = edge + (np.arange(n_major * substeps) + 0.5) * h
    slab = np.floor((samples - edge) / d).astype(np.int64)

    centres = edge + (np.arange(n_major) + 0.5) * d
    s = (centres - a_major) / u_major
    crossing = a_minor + s * u_minor
    minor_pos = (np.arange(n_minor) - (n_minor - 1) / 2.0) * d
    tent = np.clip(1.0 - np.abs(crossing[:, None] - minor_pos[None, :]) / d, 0.0, None)

    eps = np.ones(n_major)
    if ctx.use_tof:
        cx, cy = tof_bin_center(lor, ctx.tof, ev.tof_bin)
        for k in range(n_major):
            px, py = ax + s[k] * ux, ay + s[k] * uy
            d_tof = (px - cx) * ux + (py - cy) * uy
            eps[k] = tof_weight(TofKernelInput(d_tof, ctx.tof.bin_width, ctx.tof.sigma_mm))
        eps[eps < ctx.cutoff] = 0.0

    per_sample = (eps[slab] * h / abs(u_major))[:, None] * tent[slab]
    weights = per_sample.reshape(n_major, substeps, n_minor).sum(axis=1)
    dense = weights.T if x_dominant else weights
    return dense.ravel()
