"""
Tests for EventList.
"""

import numpy as np
from django.test import SimpleTestCase

from listrecon.events import Event, EventList
from listrecon.exceptions import BinIndexError, DegenerateLorError, DetectorIndexError, DimensionError


class EventListTests(SimpleTestCase):
    """Test cases for EventList"""

    def setUp(self):
        self.events = EventList.from_events([
            Event(0, 10, 1),
            Event(3, 12, 4, 0.5),
            Event(10, 0, 3),
            Event(5, 20, 2),
            Event(0, 10, 1),
        ])

    def test_columns_and_items(self):
        self.assertEqual(len(self.events), 5)
        self.assertEqual(self.events[1], Event(3, 12, 4, 0.5))
        self.assertEqual(self.events.det_a.dtype, np.int64)
        self.assertEqual(self.events.multiplier.dtype, np.float64)

    def test_round_robin_subsets_partition_events(self):
        subsets = [self.events.subset(k, 2) for k in range(2)]
        self.assertEqual([len(s) for s in subsets], [3, 2])
        self.assertEqual(subsets[1][0], self.events[1])
        self.assertEqual(subsets[0][2], self.events[4])

    def test_reversed_pair_shares_bin_with_mirrored_tof(self):
        keys = self.events.bin_keys(32, 5)
        self.assertEqual(keys[0], keys[2])
        self.assertEqual(keys[0], keys[4])
        self.assertNotEqual(keys[0], keys[1])

    def test_multiplicity(self):
        np.testing.assert_array_equal(self.events.multiplicity(32, 5), [3, 1, 3, 1, 3])

    def test_permuted_keeps_events(self):
        rng = np.random.Generator(np.random.PCG64(1))
        permuted = self.events.permuted(rng)
        self.assertEqual(sorted(map(tuple, zip(permuted.det_a, permuted.tof_bin))),
                         sorted(map(tuple, zip(self.events.det_a, self.events.tof_bin))))

    def test_equals(self):
        self.assertTrue(self.events.equals(self.events.take(np.arange(5))))
        self.assertFalse(self.events.equals(self.events.take([0, 1])))
        self.assertFalse(self.events.equals(None))

    def test_validate(self):
        self.events.validate(32, 5)
        with self.assertRaises(DetectorIndexError):
            self.events.validate(16, 5)
        with self.assertRaises(BinIndexError):
            self.events.validate(32, 3)
        with self.assertRaises(DegenerateLorError):
            EventList([1], [1], [0]).validate(32, 5)

    def test_column_lengths_must_match(self):
        with self.assertRaises(DimensionError):
            EventList([0, 1], [2], [0, 0])

    def test_empty(self):
        empty = EventList.empty()
        self.assertEqual(len(empty), 0)
        self.assertEqual(empty.multiplicity(32, 5).shape, (0,))
