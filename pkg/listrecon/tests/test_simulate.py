"""
Tests for phantoms and list-mode sampling.
"""

import numpy as np
from django.test import SimpleTestCase

from listrecon.exceptions import InvalidConfigError
from listrecon.images import Image2D, ImageGrid
from listrecon.simulate import (
    COLD_LESION,
    HOT_LESION,
    MU_WATER,
    SimConfig,
    attenuation_multipliers,
    expected_counts,
    lor_multipliers,
    make_phantom,
    psf_blur,
    sample_listmode,
)

from .utils import toy_scanner_context


class PhantomTests(SimpleTestCase):
    """Test cases for make_phantom"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.phantom = make_phantom('ellipse-brain', 0)

    def test_default_grid(self):
        self.assertEqual(self.phantom.activity.values.shape, (128, 128))
        self.assertAlmostEqual(self.phantom.activity.spacing, 2.086)

    def test_lesion_values(self):
        for mask in self.phantom.roi_masks['hot']:
            np.testing.assert_array_equal(self.phantom.activity.values[mask], HOT_LESION)
        for mask in self.phantom.roi_masks['cold']:
            np.testing.assert_array_equal(self.phantom.activity.values[mask], COLD_LESION)

    def test_lesions_are_disjoint(self):
        lesions = self.phantom.roi_masks['hot'] + self.phantom.roi_masks['cold']
        self.assertEqual(len(lesions), 4)
        total = np.sum([m.astype(int) for m in lesions], axis=0)
        self.assertLessEqual(int(total.max()), 1)

    def test_background_rois_avoid_lesions(self):
        lesions = np.any(self.phantom.roi_masks['hot'] + self.phantom.roi_masks['cold'], axis=0)
        self.assertEqual(len(self.phantom.roi_masks['background']), 15)
        for mask in self.phantom.roi_masks['background']:
            self.assertTrue(mask.any())
            self.assertFalse(np.any(mask & lesions))
            np.testing.assert_array_equal(self.phantom.activity.values[mask], self.phantom.gm_value)

    def test_truth_values(self):
        truth = self.phantom.truth_values()
        self.assertEqual(truth['hot'], HOT_LESION)
        self.assertEqual(truth['background'], self.phantom.gm_value)

    def test_attenuation_is_water_inside_head(self):
        mu = self.phantom.attenuation.values
        self.assertEqual(set(np.unique(mu)), {0.0, MU_WATER})
        self.assertTrue(np.all(mu[self.phantom.activity.values > 0] == MU_WATER))

    def test_seed_reproducibility(self):
        again = make_phantom('ellipse-brain', 0)
        other = make_phantom('ellipse-brain', 1)
        np.testing.assert_array_equal(again.activity.values, self.phantom.activity.values)
        self.assertFalse(np.array_equal(other.activity.values, self.phantom.activity.values))

    def test_disks_on_small_grid(self):
        phantom = make_phantom('disks', 3, ImageGrid(32, 32, 4.0))
        self.assertEqual(phantom.kind, 'disks')
        self.assertEqual(len(phantom.roi_masks['hot']), 2)

    def test_unknown_kind(self):
        with self.assertRaises(InvalidConfigError):
            make_phantom('hoffman', 0)


class PsfTests(SimpleTestCase):
    """Test cases for psf_blur"""

    def test_zero_fwhm_is_identity(self):
        img = Image2D(np.arange(16.0).reshape(4, 4), 2.0)
        np.testing.assert_array_equal(psf_blur(img, 0.0).values, img.values)

    def test_blur_preserves_total_activity(self):
        values = np.zeros((32, 32))
        values[10:20, 12:18] = 5.0
        blurred = psf_blur(Image2D(values, 2.0), 4.0)
        self.assertAlmostEqual(blurred.values.sum() / values.sum(), 1.0, places=9)
        self.assertLess(blurred.values.max(), 5.0)

    def test_negative_fwhm(self):
        with self.assertRaises(InvalidConfigError):
            psf_blur(Image2D(np.ones((4, 4)), 2.0), -1.0)


class SamplingTests(SimpleTestCase):
    """Test cases for sample_listmode"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ctx = toy_scanner_context()
        cls.phantom = make_phantom('disks', 0, cls.ctx.grid)
        cls.multipliers = lor_multipliers(cls.phantom, cls.ctx)

    def test_attenuation_factors_are_transmission_probabilities(self):
        m = attenuation_multipliers(self.phantom, self.ctx)
        self.assertTrue(np.all((m > 0) & (m <= 1)))
        self.assertLess(float(m.min()), 1.0)
        self.assertEqual(m.shape[0], len(self.ctx.full_bin_events()) // 5)

    def test_no_attenuation_means_unit_multipliers(self):
        np.testing.assert_array_equal(lor_multipliers(self.phantom, self.ctx, attenuation=False), 1.0)

    def test_expected_total_hits_target(self):
        cfg = SimConfig(target_counts=50000, tof=self.ctx.tof, seed=1)
        lam = expected_counts(self.phantom, cfg, self.ctx, self.multipliers)
        self.assertAlmostEqual(lam.sum() / 50000, 1.0, places=9)
        self.assertTrue(np.all(lam >= 0.2 * 50000 / lam.shape[0] - 1e-12))

    def test_sampled_counts_and_contamination(self):
        cfg = SimConfig(target_counts=50000, tof=self.ctx.tof, seed=1)
        result = sample_listmode(self.phantom, cfg, self.ctx, multipliers=self.multipliers)
        self.assertLess(abs(len(result.events) - 50000), 5 * np.sqrt(50000))
        self.assertAlmostEqual(result.contamination_mean, 0.2 * 50000 / result.n_bins_total)
        self.assertEqual(result.n_bins_total, len(self.ctx.full_bin_events()))
        result.events.validate(self.ctx.geometry.n_crystals, self.ctx.tof.n_bins)

    def test_event_multipliers_follow_their_lor(self):
        cfg = SimConfig(target_counts=5000, tof=self.ctx.tof, seed=2)
        events = sample_listmode(self.phantom, cfg, self.ctx, multipliers=self.multipliers).events
        full = self.ctx.full_bin_events()
        lookup = {(int(a), int(b)): m for a, b, m in
                  zip(full.det_a[::5], full.det_b[::5], self.multipliers)}
        for ev in list(events)[:200]:
            self.assertEqual(ev.multiplier, lookup[(ev.det_a, ev.det_b)])

    def test_noise_seed_reproducibility(self):
        cfg = SimConfig(target_counts=5000, tof=self.ctx.tof, seed=2)
        a = sample_listmode(self.phantom, cfg, self.ctx, noise_seed=[2, 0], multipliers=self.multipliers)
        b = sample_listmode(self.phantom, cfg, self.ctx, noise_seed=[2, 0], multipliers=self.multipliers)
        c = sample_listmode(self.phantom, cfg, self.ctx, noise_seed=[2, 1], multipliers=self.multipliers)
        self.assertTrue(a.events.equals(b.events))
        self.assertFalse(a.events.equals(c.events))

    def test_invalid_config(self):
        with self.assertRaises(InvalidConfigError):
            SimConfig(target_counts=0, tof=self.ctx.tof)
        with self.assertRaises(InvalidConfigError):
            SimConfig(target_counts=10, tof=self.ctx.tof, contamination_fraction=1.0)
