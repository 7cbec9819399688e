"""
Classical list-mode reconstructors.

- LM-MLEM / LM-OSEM
- LM-EM-TV: EM update followed by a few TV-regularised descent steps
- LM-SPDHG / LM-SPDHG-TV: stochastic primal-dual hybrid gradient with one dual
  variable per event, following the list-mode formulation where the dual of the
  bins without events is fixed at 1 and folded into the initial z.

All reconstructors keep the image nonnegative and assume the contamination mean
``s`` per TOF bin is known.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .events import EventList
from .exceptions import EmptyDataError, InvalidConfigError, ObjectiveSingularError, StepConfigError
from .images import Image2D
from .projector import ProjectionContext, back_project, forward_project, row_norms, sensitivity_image
from .tv import GRADIENT_NORM, gradient, gradient_adjoint, project_dual_ball, tv_grad_smooth, tv_value

logger = logging.getLogger(__name__)

ALGORITHMS = ('mlem', 'osem', 'emtv', 'spdhg', 'spdhgtv')

# Baseline settings per algorithm
ALGORITHM_DEFAULTS = {
    'mlem': {'n_iterations': 30, 'n_subsets': 1, 'beta': 0.0},
    'osem': {'n_iterations': 15, 'n_subsets': 4, 'beta': 0.0},
    'emtv': {'n_iterations': 15, 'n_subsets': 4, 'beta': 2.0},
    'spdhg': {'n_iterations': 5, 'n_subsets': 224, 'beta': 0.0},
    'spdhgtv': {'n_iterations': 5, 'n_subsets': 224, 'beta': 0.20},
}


@dataclass
class ReconConfig:
    algorithm: str = 'osem'
    n_iterations: int = 15
    n_subsets: int = 4
    beta: float = 0.0
    gamma: float = 1.0
    rho: float = 0.999
    contamination_mean: float = 0.0
    epsilon_floor: float = 1e-12
    seed: int = 0
    precondition: bool = False
    tv_inner_iterations: int = 10
    tv_step_scale: float = 1e-3
    tv_delta_scale: float = 1e-6
    divergence_factor: float = 10.0
    keep_iterates: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidConfigError(f"Unknown algorithm '{self.algorithm}', expected one of {ALGORITHMS}")
        if self.n_iterations < 0:
            raise InvalidConfigError(f"n_iterations must be >= 0, got {self.n_iterations}")
        if self.n_subsets < 1:
            raise InvalidConfigError(f"n_subsets must be >= 1, got {self.n_subsets}")
        if self.beta < 0:
            raise InvalidConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.gamma > 0:
            raise InvalidConfigError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.rho < 1:
            raise InvalidConfigError(f"rho must be in (0, 1), got {self.rho}")
        if self.contamination_mean < 0:
            raise InvalidConfigError(f"contamination_mean must be >= 0, got {self.contamination_mean}")
        if not self.epsilon_floor > 0:
            raise InvalidConfigError(f"epsilon_floor must be positive, got {self.epsilon_floor}")

    @classmethod
    def for_algorithm(cls, algorithm: str, **overrides) -> 'ReconConfig':
        params = dict(ALGORITHM_DEFAULTS.get(algorithm, {}))
        params.update(overrides)
        return cls(algorithm=algorithm, **params)


@dataclass
class ReconResult:
    image: Image2D
    iterates: List[Image2D] = field(default_factory=list, repr=False)
    objective: List[float] = field(default_factory=list)
    algorithm: str = ''


def poisson_loglik(img: Image2D, events: EventList, sens: Image2D, s: float,
                   ctx: ProjectionContext, n_bins_total: Optional[int] = None) -> float:
    """sum_t log((A img)_t + s) - <sens, img> - I*s over the I enumerable bins."""
    if n_bins_total is None:
        n_bins_total = len(ctx.full_bin_events())
    expected = forward_project(img, events, ctx) + s
    if np.any(expected <= 0):
        raise ObjectiveSingularError(
            f"{int(np.count_nonzero(expected <= 0))} events have zero expected counts")
    return float(np.log(expected).sum() - np.dot(sens.flat, img.flat) - n_bins_total * s)


def uniform_init(events: EventList, sens: Image2D, ctx: ProjectionContext) -> Image2D:
    """N / sum(sens over the FOV mask) inside the mask, 0 outside."""
    mask = ctx.fov_mask() & (sens.values > 0)
    total = float(sens.values[mask].sum())
    if not total > 0:
        raise InvalidConfigError("Sensitivity is zero over the field of view")
    values = np.where(mask, len(events) / total, 0.0)
    return Image2D(values, sens.spacing)


class _Monitor:
    """Collects iterates and objective values."""

    def __init__(self, cfg: ReconConfig, events, sens, ctx, callback):
        self.cfg = cfg
        self.events = events
        self.sens = sens
        self.ctx = ctx
        self.callback = callback
        self.n_bins_total = len(ctx.full_bin_events())
        self.iterates = []
        self.objective = []

    def value(self, x: Image2D) -> float:
        try:
            f = poisson_loglik(x, self.events, self.sens, self.cfg.contamination_mean, self.ctx,
                               self.n_bins_total)
        except ObjectiveSingularError:
            return float('nan')
        if self.cfg.beta > 0:
            f -= self.cfg.beta * tv_value(x)
        return f

    def record(self, iteration: int, x: Image2D) -> float:
        f = self.value(x)
        self.objective.append(f)
        if self.cfg.keep_iterates:
            self.iterates.append(x.copy())
        logger.debug(f"{self.cfg.algorithm} iteration {iteration}: objective {f:.6e}")
        if self.callback is not None:
            self.callback(iteration, x, f)
        return f

    def result(self, x: Image2D) -> ReconResult:
        return ReconResult(image=x, iterates=self.iterates, objective=self.objective,
                           algorithm=self.cfg.algorithm)


def _prepare(events: EventList, init: Optional[Image2D], ctx: ProjectionContext,
             sens: Optional[Image2D]):
    if len(events) == 0:
        raise EmptyDataError("Cannot reconstruct from an empty event list")
    if sens is None:
        sens = sensitivity_image(ctx)
    if init is None:
        init = uniform_init(events, sens, ctx)
    init.check_grid(ctx.grid)
    if np.any(init.values < 0):
        raise InvalidConfigError("Initial image must be nonnegative")
    return init.copy(), sens


def _em_step(x: np.ndarray, events: EventList, sens_sub: np.ndarray, cfg: ReconConfig,
             ctx: ProjectionContext) -> np.ndarray:
    img = Image2D(x, ctx.grid.spacing)
    expected = forward_project(img, events, ctx) + cfg.contamination_mean
    ratio = 1.0 / np.maximum(expected, cfg.epsilon_floor)
    bp = back_project(ratio, events, ctx.grid, ctx).values
    safe = np.where(sens_sub > 0, sens_sub, 1.0)
    return np.where(sens_sub > 0, x * bp / safe, 0.0)


def _tv_descent(x_em: np.ndarray, x_old: np.ndarray, sens_sub: np.ndarray,
                cfg: ReconConfig) -> np.ndarray:
    """Descent on sum sens/(2 x_old) (x - x_em)^2 + beta TV_delta, scaled by 1/sens."""
    x_max = float(x_em.max())
    if cfg.beta == 0 or x_max <= 0:
        return x_em
    step = cfg.tv_step_scale * x_max
    delta = cfg.tv_delta_scale * x_max
    support = sens_sub > 0
    x_ref = np.maximum(x_old, step)
    safe = np.where(support, sens_sub, 1.0)
    x = x_em.copy()
    for _ in range(cfg.tv_inner_iterations):
        g = (x - x_em) / x_ref + cfg.beta * tv_grad_smooth(x, delta) / safe
        x = np.where(support, np.maximum(x - step * g, 0.0), 0.0)
    return x


def _ordered_subsets(events: EventList, init: Image2D, cfg: ReconConfig, ctx: ProjectionContext,
                     sens: Image2D, callback, tv: bool) -> ReconResult:
    monitor = _Monitor(cfg, events, sens, ctx, callback)
    x = init.values.copy()
    n = cfg.n_subsets
    subsets = [events.subset(k, n) for k in range(n)]
    sens_sub = sens.values / n

    for it in range(cfg.n_iterations):
        for k, sub in enumerate(subsets):
            if len(sub) == 0:
                logger.warning(f"Subset {k} of {n} has no events, skipped")
                continue
            x_new = _em_step(x, sub, sens_sub, cfg, ctx)
            if tv:
                x_new = _tv_descent(x_new, x, sens_sub, cfg)
            x = x_new
        monitor.record(it + 1, Image2D(x, ctx.grid.spacing))
    return monitor.result(Image2D(x, ctx.grid.spacing))


def lm_osem(events: EventList, init: Optional[Image2D], cfg: ReconConfig, ctx: ProjectionContext,
            sens: Optional[Image2D] = None, callback: Optional[Callable] = None) -> ReconResult:
    """Ordered-subset EM; one iteration is a full pass over all subsets."""
    init, sens = _prepare(events, init, ctx, sens)
    logger.info(f"LM-OSEM: {len(events)} events, {cfg.n_subsets} subsets, {cfg.n_iterations} iterations")
    return _ordered_subsets(events, init, cfg, ctx, sens, callback, tv=False)


def lm_mlem(events: EventList, init: Optional[Image2D], cfg: ReconConfig, ctx: ProjectionContext,
            sens: Optional[Image2D] = None, callback: Optional[Callable] = None) -> ReconResult:
    """x <- x / sens * A^T (1 / (Ax + s))."""
    init, sens = _prepare(events, init, ctx, sens)
    cfg = _with(cfg, n_subsets=1)
    logger.info(f"LM-MLEM: {len(events)} events, {cfg.n_iterations} iterations")
    return _ordered_subsets(events, init, cfg, ctx, sens, callback, tv=False)


def lm_em_tv(events: EventList, init: Optional[Image2D], cfg: ReconConfig, ctx: ProjectionContext,
             sens: Optional[Image2D] = None, callback: Optional[Callable] = None) -> ReconResult:
    """EM update per subset, each followed by TV-weighted descent steps.

    beta = 0 reproduces the OSEM trajectory exactly.
    """
    init, sens = _prepare(events, init, ctx, sens)
    logger.info(f"LM-EM-TV: beta {cfg.beta}, {cfg.n_subsets} subsets, {cfg.n_iterations} iterations")
    return _ordered_subsets(events, init, cfg, ctx, sens, callback, tv=True)


def _with(cfg: ReconConfig, **changes) -> ReconConfig:
    params = dict(cfg.__dict__)
    params.update(changes)
    return ReconConfig(**params)


def _spdhg(events: EventList, init: Image2D, cfg: ReconConfig, ctx: ProjectionContext,
           sens: Image2D, callback, beta: float) -> ReconResult:
    monitor = _Monitor(_with(cfg, beta=beta), events, sens, ctx, callback)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = cfg.n_subsets
    n_events = len(events)
    s = cfg.contamination_mean
    shape = ctx.grid.shape

    p_g = 0.5 if beta > 0 else 0.0
    p_p = (1.0 - p_g) / n

    mu = events.multiplicity(ctx.geometry.n_crystals, ctx.tof.n_bins)
    l2, sums = row_norms(events, ctx)

    if cfg.precondition:
        S = np.divide(cfg.gamma * cfg.rho, sums, out=np.zeros(n_events), where=sums > 0)
        sens_sub = sens.values / n
        T = np.divide(p_p * cfg.rho, cfg.gamma * sens_sub, out=np.zeros(shape), where=sens_sub > 0)
    else:
        S = np.divide(cfg.gamma * cfg.rho, l2, out=np.zeros(n_events), where=l2 > 0)
        max_norm = float(l2.max())
        if not max_norm > 0:
            raise EmptyDataError("No event intersects the image grid")
        T = np.full(shape, p_p * cfg.rho / (cfg.gamma * max_norm))

    if p_g > 0:
        S_g = cfg.gamma * cfg.rho / GRADIENT_NORM
        T_g = cfg.rho * p_g / (GRADIENT_NORM * cfg.gamma)
        T = np.minimum(T, T_g)

    subset_idx = [np.arange(k, n_events, n) for k in range(n)]
    subsets = [events.take(idx) for idx in subset_idx]

    x = init.values.copy()
    y = np.zeros(n_events)
    # bins without events keep their dual at 1
    z = sens.values - back_project(1.0 / mu, events, ctx.grid, ctx).values
    y_grad = np.zeros((2,) + shape)
    zbar = z.copy()

    f_prev = monitor.value(Image2D(x, ctx.grid.spacing))
    for it in range(cfg.n_iterations):
        sequence = rng.permutation(int(round(n / (1.0 - p_g))))
        for i in sequence:
            x = np.clip(x - T * zbar, 0, None)
            if i < n:
                idx = subset_idx[i]
                sub = subsets[i]
                if len(sub) == 0:
                    continue
                y_plus = y[idx] + S[idx] * (forward_project(Image2D(x, ctx.grid.spacing), sub, ctx) + s)
                y_plus = 0.5 * (y_plus + 1 - np.sqrt((y_plus - 1) ** 2 + 4 * S[idx] * mu[idx]))
                dz = back_project((y_plus - y[idx]) / mu[idx], sub, ctx.grid, ctx).values
                z = z + dz
                y[idx] = y_plus
                zbar = z + dz / p_p
            else:
                y_grad_plus = project_dual_ball(y_grad + S_g * gradient(x), beta)
                dz = gradient_adjoint(y_grad_plus - y_grad)
                z = z + dz
                y_grad = y_grad_plus
                zbar = z + dz / p_g

        if not np.all(np.isfinite(x)):
            raise StepConfigError(f"Non-finite image after iteration {it + 1}; reduce gamma or rho")
        f = monitor.record(it + 1, Image2D(x, ctx.grid.spacing))
        if np.isfinite(f) and np.isfinite(f_prev):
            # objective is maximised; a cost increase beyond the factor means divergence
            if (f_prev - f) > cfg.divergence_factor * abs(f_prev):
                raise StepConfigError(
                    f"SPDHG diverged at iteration {it + 1}: objective {f_prev:.4e} -> {f:.4e}")
        elif not np.isnan(f) and not np.isfinite(f):
            raise StepConfigError(f"Objective became {f} at iteration {it + 1}")
        f_prev = f

    return monitor.result(Image2D(x, ctx.grid.spacing))


def lm_spdhg(events: EventList, init: Optional[Image2D], cfg: ReconConfig, ctx: ProjectionContext,
             sens: Optional[Image2D] = None, callback: Optional[Callable] = None) -> ReconResult:
    init, sens = _prepare(events, init, ctx, sens)
    logger.info(f"LM-SPDHG: {cfg.n_subsets} subsets, {cfg.n_iterations} iterations, gamma {cfg.gamma}")
    return _spdhg(events, init, cfg, ctx, sens, callback, beta=0.0)


def lm_spdhg_tv(events: EventList, init: Optional[Image2D], cfg: ReconConfig, ctx: ProjectionContext,
                sens: Optional[Image2D] = None, callback: Optional[Callable] = None) -> ReconResult:
    """SPDHG with an extra TV dual block chosen with probability 1/2 when beta > 0."""
    init, sens = _prepare(events, init, ctx, sens)
    logger.info(f"LM-SPDHG-TV: beta {cfg.beta}, {cfg.n_subsets} subsets, {cfg.n_iterations} iterations")
    return _spdhg(events, init, cfg, ctx, sens, callback, beta=cfg.beta)


RECONSTRUCTORS = {
    'mlem': lm_mlem,
    'osem': lm_osem,
    'emtv': lm_em_tv,
    'spdhg': lm_spdhg,
    'spdhgtv': lm_spdhg_tv,
}


def reconstruct(events: EventList, cfg: ReconConfig, ctx: ProjectionContext,
                sens: Optional[Image2D] = None, init: Optional[Image2D] = None,
                callback: Optional[Callable] = None) -> ReconResult:
    return RECONSTRUCTORS[cfg.algorithm](events, init, cfg, ctx, sens=sens, callback=callback)
