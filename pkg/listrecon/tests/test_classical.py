"""
Tests for the classical list-mode reconstructions against dense references.
"""

import numpy as np
from django.test import SimpleTestCase

from listrecon.classical import (
    ALGORITHM_DEFAULTS,
    ReconConfig,
    _tv_descent,
    lm_em_tv,
    lm_mlem,
    lm_osem,
    lm_spdhg,
    lm_spdhg_tv,
    poisson_loglik,
    reconstruct,
    uniform_init,
)
from listrecon.events import EventList
from listrecon.exceptions import EmptyDataError, InvalidConfigError, ObjectiveSingularError
from listrecon.images import Image2D
from listrecon.projector import sensitivity_image
from listrecon.tv import GRADIENT_NORM, gradient, gradient_adjoint, project_dual_ball, tv_grad_smooth, tv_value

from .utils import dense_matrix, disc_image, sample_events, small_context


def reference_os_em(A, sens, x0, n_iterations, n_subsets, s=0.0):
    x = x0.copy()
    sens_sub = sens / n_subsets
    for _ in range(n_iterations):
        for k in range(n_subsets):
            Ak = A[k::n_subsets]
            ratio = 1.0 / np.maximum(Ak @ x + s, 1e-12)
            bp = Ak.T @ ratio
            x = np.where(sens_sub > 0, x * bp / np.where(sens_sub > 0, sens_sub, 1.0), 0.0)
    return x


def reference_tv_descent(x_em, x_old, sens_sub, beta, inner=10, step_scale=1e-3, delta_scale=1e-6):
    x_max = x_em.max()
    step, delta = step_scale * x_max, delta_scale * x_max
    x_ref = np.maximum(x_old, step)
    safe = np.where(sens_sub > 0, sens_sub, 1.0)
    x = x_em.copy()
    for _ in range(inner):
        g = (x - x_em) / x_ref + beta * tv_grad_smooth(x, delta) / safe
        x = np.where(sens_sub > 0, np.maximum(x - step * g, 0.0), 0.0)
    return x


def reference_em_tv(A, sens, x0, n_iterations, n_subsets, beta, s=0.0):
    """Per-iteration images of EM-TV with a dense system matrix; sens and x0 are (Q, P)."""
    shape = sens.shape
    x = x0.copy()
    sens_sub = sens / n_subsets
    iterates = []
    for _ in range(n_iterations):
        for k in range(n_subsets):
            Ak = A[k::n_subsets]
            ratio = 1.0 / np.maximum(Ak @ x.ravel() + s, 1e-12)
            bp = (Ak.T @ ratio).reshape(shape)
            x_em = np.where(sens_sub > 0, x * bp / np.where(sens_sub > 0, sens_sub, 1.0), 0.0)
            x = reference_tv_descent(x_em, x, sens_sub, beta)
        iterates.append(x.copy())
    return iterates


def reference_spdhg(A, sens, x0, mu, cfg, beta):
    """Per-iteration images of (TV-)SPDHG with a dense system matrix and the same subset draws."""
    shape = sens.shape
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = cfg.n_subsets
    s = cfg.contamination_mean
    p_g = 0.5 if beta > 0 else 0.0
    p_p = (1.0 - p_g) / n

    l2 = np.linalg.norm(A, axis=1)
    sums = A.sum(axis=1)
    if cfg.precondition:
        S = np.where(sums > 0, cfg.gamma * cfg.rho / np.where(sums > 0, sums, 1.0), 0.0)
        sens_sub = sens / n
        T = np.where(sens_sub > 0, p_p * cfg.rho / (cfg.gamma * np.where(sens_sub > 0, sens_sub, 1.0)), 0.0)
    else:
        S = np.where(l2 > 0, cfg.gamma * cfg.rho / np.where(l2 > 0, l2, 1.0), 0.0)
        T = np.full(shape, p_p * cfg.rho / (cfg.gamma * l2.max()))
    if p_g > 0:
        S_g = cfg.gamma * cfg.rho / GRADIENT_NORM
        T = np.minimum(T, cfg.rho * p_g / (GRADIENT_NORM * cfg.gamma))

    idx = [np.arange(k, A.shape[0], n) for k in range(n)]
    x = x0.copy()
    y = np.zeros(A.shape[0])
    y_grad = np.zeros((2,) + shape)
    z = sens - (A.T @ (1.0 / mu)).reshape(shape)
    zbar = z.copy()
    iterates = []
    for _ in range(cfg.n_iterations):
        for i in rng.permutation(int(round(n / (1.0 - p_g)))):
            x = np.maximum(x - T * zbar, 0.0)
            if i < n:
                rows = idx[i]
                if rows.shape[0] == 0:
                    continue
                Ai = A[rows]
                y_hat = y[rows] + S[rows] * (Ai @ x.ravel() + s)
                y_new = 0.5 * (y_hat + 1 - np.sqrt((y_hat - 1) ** 2 + 4 * S[rows] * mu[rows]))
                dz = (Ai.T @ ((y_new - y[rows]) / mu[rows])).reshape(shape)
                y[rows] = y_new
                z = z + dz
                zbar = z + dz / p_p
            else:
                y_grad_new = project_dual_ball(y_grad + S_g * gradient(x), beta)
                dz = gradient_adjoint(y_grad_new - y_grad)
                y_grad = y_grad_new
                z = z + dz
                zbar = z + dz / p_g
        iterates.append(x.copy())
    return iterates


class ReconConfigTests(SimpleTestCase):
    """Test cases for ReconConfig"""

    def test_defaults_per_algorithm(self):
        cfg = ReconConfig.for_algorithm('spdhgtv')
        self.assertEqual(cfg.n_subsets, 224)
        self.assertEqual(cfg.beta, 0.20)
        self.assertEqual(set(ALGORITHM_DEFAULTS), {'mlem', 'osem', 'emtv', 'spdhg', 'spdhgtv'})

    def test_overrides(self):
        cfg = ReconConfig.for_algorithm('osem', n_subsets=7)
        self.assertEqual(cfg.n_subsets, 7)
        self.assertEqual(cfg.n_iterations, 15)

    def test_invalid_values(self):
        with self.assertRaises(InvalidConfigError):
            ReconConfig(algorithm='art')
        with self.assertRaises(InvalidConfigError):
            ReconConfig(n_subsets=0)
        with self.assertRaises(InvalidConfigError):
            ReconConfig(rho=1.0)
        with self.assertRaises(InvalidConfigError):
            ReconConfig(beta=-1.0)


class ReconstructionFixture(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ctx = small_context()
        cls.truth = disc_image(cls.ctx.grid)
        cls.events = sample_events(cls.ctx, cls.truth, counts=3000, seed=1)
        cls.sens = sensitivity_image(cls.ctx)
        cls.init = uniform_init(cls.events, cls.sens, cls.ctx)
        cls.A = dense_matrix(cls.ctx, cls.events)


class ObjectiveTests(ReconstructionFixture):
    """Test cases for the Poisson log-likelihood"""

    def test_matches_dense_formula(self):
        s = 0.05
        x = self.init.flat
        expected = np.log(self.A @ x + s).sum() - np.dot(self.sens.flat, x) - 1360 * s
        value = poisson_loglik(self.init, self.events, self.sens, s, self.ctx)
        self.assertAlmostEqual(value / expected, 1.0, places=10)

    def test_zero_image_without_contamination_is_singular(self):
        with self.assertRaises(ObjectiveSingularError):
            poisson_loglik(self.ctx.grid.zeros(), self.events, self.sens, 0.0, self.ctx)

    def test_uniform_init_is_zero_outside_fov(self):
        mask = self.ctx.fov_mask()
        self.assertTrue(np.all(self.init.values[~mask] == 0))
        self.assertAlmostEqual(float(np.dot(self.sens.flat, self.init.flat)), len(self.events), places=6)


class EmTests(ReconstructionFixture):
    """Test cases for LM-MLEM, LM-OSEM and LM-EM-TV"""

    def test_mlem_matches_dense_reference(self):
        cfg = ReconConfig(algorithm='mlem', n_iterations=5)
        result = lm_mlem(self.events, self.init, cfg, self.ctx, sens=self.sens)
        reference = reference_os_em(self.A, self.sens.flat, self.init.flat, 5, 1)
        np.testing.assert_allclose(result.image.flat, reference, rtol=1e-8, atol=1e-12)

    def test_osem_with_contamination_matches_dense_reference(self):
        cfg = ReconConfig(algorithm='osem', n_iterations=3, n_subsets=4, contamination_mean=0.02)
        result = lm_osem(self.events, self.init, cfg, self.ctx, sens=self.sens)
        reference = reference_os_em(self.A, self.sens.flat, self.init.flat, 3, 4, s=0.02)
        np.testing.assert_allclose(result.image.flat, reference, rtol=1e-8, atol=1e-12)

    def test_mlem_objective_is_monotone(self):
        cfg = ReconConfig(algorithm='mlem', n_iterations=10)
        result = lm_mlem(self.events, self.init, cfg, self.ctx, sens=self.sens)
        f = np.array(result.objective)
        self.assertEqual(f.shape, (10,))
        self.assertTrue(np.all(np.diff(f) >= -1e-9 * np.abs(f[1:])))

    def test_mlem_preserves_counts(self):
        cfg = ReconConfig(algorithm='mlem', n_iterations=4)
        result = lm_mlem(self.events, self.init, cfg, self.ctx, sens=self.sens)
        for x in result.iterates:
            self.assertAlmostEqual(float(np.dot(self.sens.flat, x.flat)) / len(self.events), 1.0, places=9)

    def test_mlem_ignores_subset_setting(self):
        a = lm_mlem(self.events, self.init, ReconConfig(algorithm='mlem', n_iterations=2, n_subsets=5),
                    self.ctx, sens=self.sens)
        b = lm_mlem(self.events, self.init, ReconConfig(algorithm='mlem', n_iterations=2), self.ctx,
                    sens=self.sens)
        np.testing.assert_array_equal(a.image.values, b.image.values)

    def test_em_tv_without_penalty_is_osem(self):
        osem = lm_osem(self.events, self.init, ReconConfig(algorithm='osem', n_iterations=3, n_subsets=2),
                       self.ctx, sens=self.sens)
        emtv = lm_em_tv(self.events, self.init,
                        ReconConfig(algorithm='emtv', n_iterations=3, n_subsets=2, beta=0.0),
                        self.ctx, sens=self.sens)
        np.testing.assert_array_equal(osem.image.values, emtv.image.values)

    def test_em_tv_stays_nonnegative(self):
        cfg = ReconConfig(algorithm='emtv', n_iterations=3, n_subsets=2, beta=2.0, contamination_mean=0.01)
        result = lm_em_tv(self.events, self.init, cfg, self.ctx, sens=self.sens)
        self.assertTrue(np.all(result.image.values >= 0))
        self.assertTrue(np.all(np.isfinite(result.objective)))

    def test_tv_descent_lowers_total_variation(self):
        rng = np.random.Generator(np.random.PCG64(2))
        x_em = 1.0 + 0.5 * rng.random((8, 8))
        cfg = ReconConfig(algorithm='emtv', beta=1.0)
        x = _tv_descent(x_em, x_em, np.ones((8, 8)), cfg)
        self.assertLess(tv_value(x), tv_value(x_em))
        self.assertTrue(np.all(x >= 0))

    def test_callback_sees_every_iteration(self):
        seen = []
        reconstruct(self.events, ReconConfig(algorithm='osem', n_iterations=3, n_subsets=2), self.ctx,
                    sens=self.sens, callback=lambda it, x, f: seen.append((it, f)))
        self.assertEqual([it for it, _ in seen], [1, 2, 3])

    def test_empty_subsets_are_skipped(self):
        events = self.events.take(np.arange(3))
        cfg = ReconConfig(algorithm='osem', n_iterations=1, n_subsets=5)
        with self.assertLogs('listrecon.classical', level='WARNING'):
            result = lm_osem(events, None, cfg, self.ctx, sens=self.sens)
        self.assertTrue(np.all(np.isfinite(result.image.values)))

    def test_empty_event_list(self):
        with self.assertRaises(EmptyDataError):
            lm_osem(EventList.empty(), None, ReconConfig(), self.ctx, sens=self.sens)


class SpdhgTests(ReconstructionFixture):
    """Test cases for LM-SPDHG and LM-SPDHG-TV"""

    def test_seeded_runs_repeat(self):
        cfg = ReconConfig(algorithm='spdhg', n_iterations=3, n_subsets=8, seed=4)
        a = lm_spdhg(self.events, self.init, cfg, self.ctx, sens=self.sens)
        b = lm_spdhg(self.events, self.init, cfg, self.ctx, sens=self.sens)
        np.testing.assert_array_equal(a.image.values, b.image.values)

    def test_image_is_nonnegative(self):
        for precondition in (False, True):
            cfg = ReconConfig(algorithm='spdhg', n_iterations=3, n_subsets=8, precondition=precondition)
            result = lm_spdhg(self.events, self.init, cfg, self.ctx, sens=self.sens)
            self.assertTrue(np.all(result.image.values >= 0))
            self.assertEqual(len(result.objective), 3)

    def test_tv_variant_without_penalty_matches_plain(self):
        cfg = ReconConfig(algorithm='spdhgtv', n_iterations=2, n_subsets=8, beta=0.0, seed=1)
        plain = lm_spdhg(self.events, self.init, ReconConfig(algorithm='spdhg', n_iterations=2,
                                                             n_subsets=8, seed=1), self.ctx, sens=self.sens)
        tv = lm_spdhg_tv(self.events, self.init, cfg, self.ctx, sens=self.sens)
        np.testing.assert_array_equal(plain.image.values, tv.image.values)

    def test_tv_variant_runs(self):
        cfg = ReconConfig(algorithm='spdhgtv', n_iterations=2, n_subsets=8, beta=0.2)
        result = lm_spdhg_tv(self.events, self.init, cfg, self.ctx, sens=self.sens)
        self.assertTrue(np.all(result.image.values >= 0))
        self.assertTrue(np.all(np.isfinite(result.image.values)))


class DenseReferenceTests(ReconstructionFixture):
    """Test cases comparing EM-TV and SPDHG iterates with dense-matrix references"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.mu = cls.events.multiplicity(cls.ctx.geometry.n_crystals, cls.ctx.tof.n_bins)

    def assertIteratesMatch(self, result, reference):
        self.assertEqual(len(result.iterates), len(reference))
        for got, expected in zip(result.iterates, reference):
            rmse = np.sqrt(np.mean((got.values - expected) ** 2))
            self.assertLessEqual(rmse, 1e-10 * max(1.0, float(np.abs(expected).max())))

    def test_em_tv(self):
        cfg = ReconConfig(algorithm='emtv', n_iterations=3, n_subsets=2, beta=2.0, contamination_mean=0.01)
        result = lm_em_tv(self.events, self.init, cfg, self.ctx, sens=self.sens)
        reference = reference_em_tv(self.A, self.sens.values, self.init.values, 3, 2, 2.0, s=0.01)
        self.assertIteratesMatch(result, reference)

    def test_spdhg(self):
        cfg = ReconConfig(algorithm='spdhg', n_iterations=3, n_subsets=8, seed=5, contamination_mean=0.01)
        result = lm_spdhg(self.events, self.init, cfg, self.ctx, sens=self.sens)
        reference = reference_spdhg(self.A, self.sens.values, self.init.values, self.mu, cfg, beta=0.0)
        self.assertIteratesMatch(result, reference)

    def test_preconditioned_spdhg(self):
        cfg = ReconConfig(algorithm='spdhg', n_iterations=3, n_subsets=8, seed=6, precondition=True)
        result = lm_spdhg(self.events, self.init, cfg, self.ctx, sens=self.sens)
        reference = reference_spdhg(self.A, self.sens.values, self.init.values, self.mu, cfg, beta=0.0)
        self.assertIteratesMatch(result, reference)

    def test_spdhg_tv(self):
        cfg = ReconConfig(algorithm='spdhgtv', n_iterations=3, n_subsets=8, beta=0.2, seed=7)
        result = lm_spdhg_tv(self.events, self.init, cfg, self.ctx, sens=self.sens)
        reference = reference_spdhg(self.A, self.sens.values, self.init.values, self.mu, cfg, beta=0.2)
        self.assertIteratesMatch(result, reference)


class ConvergenceTests(SimpleTestCase):
    """Test cases for long runs reaching the maximum-likelihood objective"""

    def test_single_subset_spdhg_reaches_mlem_objective(self):
        ctx = small_context()
        sens = sensitivity_image(ctx)
        events = sample_events(ctx, disc_image(ctx.grid), counts=400, seed=8)
        # one event per bin
        keys = events.bin_keys(ctx.geometry.n_crystals, ctx.tof.n_bins)
        _, first = np.unique(keys, return_index=True)
        events = events.take(np.sort(first))
        init = Image2D(np.where(sens.values > 0, 1.0, 0.0), ctx.grid.spacing)

        mlem = lm_mlem(events, init, ReconConfig(algorithm='mlem', n_iterations=3000, keep_iterates=False),
                       ctx, sens=sens)
        cfg = ReconConfig(algorithm='spdhg', n_iterations=3000, n_subsets=1, precondition=True,
                          keep_iterates=False)
        spdhg = lm_spdhg(events, init, cfg, ctx, sens=sens)

        f_mlem, f_spdhg = mlem.objective[-1], spdhg.objective[-1]
        self.assertTrue(np.isfinite(f_spdhg))
        self.assertLessEqual(abs(f_spdhg - f_mlem), 0.005 * abs(f_mlem))
