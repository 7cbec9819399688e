"""
Tests for toy-scale training and network checkpoints.
"""

import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from listrecon.exceptions import EmptyDataError, HashMismatchError, TrainingDivergedError
from listrecon.images import Image2D
from listrecon.lpd import NetworkConfig, lmpd_forward
from listrecon.training import (
    TrainConfig,
    TrainingPair,
    evaluate_loss,
    load_network,
    save_network,
    train_toy,
    training_state,
)

from .utils import disc_image, sample_events, small_context

TINY = NetworkConfig(n_phases=1, dual_widths=(4,), primal_channels=(2, 4, 1))


class TrainToyTests(SimpleTestCase):
    """Test cases for train_toy"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ctx = small_context()
        cls.pairs = []
        for seed, radius in ((0, 4.0), (1, 6.0), (2, 5.0)):
            truth = disc_image(cls.ctx.grid, radius=radius)
            cls.pairs.append(TrainingPair(sample_events(cls.ctx, truth, counts=300, seed=seed), truth,
                                          f"pair{seed}"))

    def test_losses_and_best_epoch(self):
        result = train_toy(self.pairs[:2], self.pairs[2:], self.ctx, TINY, TrainConfig(epochs=2))
        self.assertEqual(len(result.val_losses), 3)
        self.assertTrue(math.isnan(result.train_losses[0]))
        self.assertEqual(result.best_val_loss, min(result.val_losses))
        self.assertEqual(result.val_losses[result.best_epoch], result.best_val_loss)
        self.assertAlmostEqual(evaluate_loss(result.net, self.pairs[2:], self.ctx), result.best_val_loss,
                               places=10)

    def test_resume_continues_the_same_run(self):
        straight = train_toy(self.pairs[:2], self.pairs[2:], self.ctx, TINY, TrainConfig(epochs=2, seed=3))

        states = []
        train_toy(self.pairs[:2], self.pairs[2:], self.ctx, TINY, TrainConfig(epochs=1, seed=3),
                  epoch_callback=lambda epoch, net, opt, partial: states.append(
                      training_state(epoch, net, opt, partial)))
        resumed = train_toy(self.pairs[:2], self.pairs[2:], self.ctx, TINY, TrainConfig(epochs=2, seed=3),
                            resume_state=states[-1])
        np.testing.assert_allclose(resumed.val_losses, straight.val_losses, rtol=1e-9)
        self.assertEqual(resumed.best_epoch, straight.best_epoch)

    def test_empty_training_set(self):
        with self.assertRaises(EmptyDataError):
            train_toy([], self.pairs, self.ctx, TINY, TrainConfig(epochs=1))

    def test_divergence_keeps_last_good_state(self):
        bad_truth = Image2D(np.full((8, 8), np.nan), 2.0)
        pair = TrainingPair(self.pairs[0].events, bad_truth, 'bad')
        with self.assertRaises(TrainingDivergedError) as context:
            train_toy([pair], [], self.ctx, TINY, TrainConfig(epochs=2))
        self.assertIsNotNone(context.exception.checkpoint)
        self.assertEqual(context.exception.epoch, 1)


class CheckpointTests(SimpleTestCase):
    """Test cases for save_network and load_network"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ctx = small_context()
        truth = disc_image(cls.ctx.grid)
        cls.pair = TrainingPair(sample_events(cls.ctx, truth, counts=300, seed=0), truth)

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'checkpoint.lmpd'

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_reproduces_output(self):
        result = train_toy([self.pair], [], self.ctx, TINY, TrainConfig(epochs=1))
        save_network(self.path, result.net)
        loaded = load_network(self.path, TINY)
        a = lmpd_forward(result.net, self.pair.events, self.ctx).image.values
        b = lmpd_forward(loaded, self.pair.events, self.ctx).image.values
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_config_mismatch(self):
        result = train_toy([self.pair], [], self.ctx, TINY, TrainConfig(epochs=1))
        save_network(self.path, result.net)
        with self.assertRaises(HashMismatchError):
            load_network(self.path, NetworkConfig(n_phases=2, dual_widths=(4,), primal_channels=(2, 4, 1)))
