"""
Tests for the total-variation helpers.
"""

import numpy as np
from django.test import SimpleTestCase

from listrecon.exceptions import InvalidConfigError
from listrecon.images import Image2D
from listrecon.tv import (
    GRADIENT_NORM,
    gradient,
    gradient_adjoint,
    project_dual_ball,
    tv_grad_smooth,
    tv_value,
)


class GradientTests(SimpleTestCase):
    """Test cases for the finite-difference gradient"""

    def setUp(self):
        self.rng = np.random.Generator(np.random.PCG64(0))

    def test_adjoint(self):
        x = self.rng.random((6, 5))
        g = self.rng.random((2, 6, 5))
        self.assertAlmostEqual(float(np.sum(gradient(x) * g)), float(np.sum(x * gradient_adjoint(g))),
                               places=12)

    def test_neumann_boundary(self):
        g = gradient(self.rng.random((4, 4)))
        np.testing.assert_array_equal(g[0, :, -1], 0.0)
        np.testing.assert_array_equal(g[1, -1, :], 0.0)

    def test_norm_bound(self):
        x = self.rng.standard_normal((16, 16))
        self.assertLessEqual(np.linalg.norm(gradient(x)), GRADIENT_NORM * np.linalg.norm(x))


class TvValueTests(SimpleTestCase):
    """Test cases for tv_value and tv_grad_smooth"""

    def test_constant_image_has_zero_tv(self):
        self.assertEqual(tv_value(np.full((5, 5), 3.0)), 0.0)

    def test_vertical_edge(self):
        x = np.array([[0.0, 1.0], [0.0, 1.0]])
        self.assertAlmostEqual(tv_value(x), 2.0)
        self.assertAlmostEqual(tv_value(Image2D(x, 2.0)), 2.0)

    def test_smoothed_gradient_matches_finite_differences(self):
        rng = np.random.Generator(np.random.PCG64(1))
        x = rng.random((5, 5))
        delta = 0.1
        grad = tv_grad_smooth(x, delta)
        h = 1e-6
        numeric = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = h
            numeric[idx] = (tv_value(x + e, delta) - tv_value(x - e, delta)) / (2 * h)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-7)

    def test_gradient_keeps_image_type(self):
        out = tv_grad_smooth(Image2D(np.eye(3), 1.5), 0.1)
        self.assertIsInstance(out, Image2D)
        self.assertEqual(out.spacing, 1.5)

    def test_delta_must_be_positive(self):
        with self.assertRaises(InvalidConfigError):
            tv_grad_smooth(np.eye(3), 0.0)


class DualBallTests(SimpleTestCase):
    """Test cases for project_dual_ball"""

    def test_projection(self):
        y = np.zeros((2, 2, 2))
        y[:, 0, 0] = (3.0, 4.0)
        y[:, 1, 1] = (0.1, 0.2)
        p = project_dual_ball(y, 1.0)
        np.testing.assert_allclose(p[:, 0, 0], (0.6, 0.8))
        np.testing.assert_array_equal(p[:, 1, 1], (0.1, 0.2))
        self.assertTrue(np.all(np.hypot(p[0], p[1]) <= 1.0 + 1e-12))
