import json
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from Trajectories.errors import ConfigError, DomainError
from Trajectories.exports import (config_hash, read_trajectory_csv, to_json, write_frame, write_manifest,
                                  write_trajectory)
from Trajectories.integrator import Trajectory, integrate
from Trajectories.wavefunction import WaveSpec


def sample_trajectory():
    times = np.linspace(0.0, 1.0, 5)
    points = np.column_stack([np.cos(times), np.sin(times), times / 3.0])
    return Trajectory(times, points, 12, 1, 0.25)


class ExportTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_is_exact_and_repeatable(self):
        traj = sample_trajectory()
        first = write_trajectory(self.out / 'a.csv', traj).read_bytes()
        second = write_trajectory(self.out / 'b.csv', traj).read_bytes()
        self.assertEqual(first, second)
        times, points = read_trajectory_csv(self.out / 'a.csv')
        np.testing.assert_array_equal(times, traj.times)
        np.testing.assert_array_equal(points, traj.points)
        meta = json.loads((self.out / 'a.meta.json').read_text())
        self.assertEqual(meta['steps_accepted'], 12)
        self.assertEqual(meta['samples'], 5)

    def test_sidecar_records_spec_config_and_flags(self):
        spec = WaveSpec.from_numbers([0.98 ** 0.5, 0.1, 0.1], [(1, 0, 0), (0, 1, 0), (0, 0, 1)],
                                     (1.0, 2 ** 0.5, 3 ** 0.5))
        traj = integrate(spec, (1.0, 0.0, 1.0), 0.0, 1.0, sample_dt=0.5)
        config = {'task': 'simulate', 'scenario': {'t1': 1.0}}
        write_trajectory(self.out / 'run.csv', traj, spec, config, {'x0': [1.0, 0.0, 1.0]})
        meta = json.loads((self.out / 'run.meta.json').read_text())
        self.assertEqual(meta['spec']['modes'], [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        self.assertAlmostEqual(meta['spec']['amplitudes'][1][0], 0.1)
        self.assertEqual(meta['config'], config)
        self.assertEqual(meta['x0'], [1.0, 0.0, 1.0])
        self.assertEqual(meta['samples'], 3)
        self.assertEqual(meta['flags'], {'step_underflow': False, 'max_steps': False, 'node_proximity': False,
                                         'node_proximity_rejects': 0, 'stopped': False})

    def test_missing_columns_and_empty_files(self):
        write_frame(self.out / 'short.csv', pd.DataFrame({'t': [0.0], 'x': [1.0]}))
        with self.assertRaises(ConfigError):
            read_trajectory_csv(self.out / 'short.csv')
        (self.out / 'empty.csv').write_text('t,x,y,z\n')
        with self.assertRaises(DomainError):
            read_trajectory_csv(self.out / 'empty.csv')
        with self.assertRaises(ConfigError):
            read_trajectory_csv(self.out / 'absent.csv')

    def test_json_handles_numpy_and_nan(self):
        payload = json.loads(to_json({'a': np.float64(0.5), 'b': np.arange(2), 'c': float('nan'), 'd': 1 + 2j}))
        self.assertEqual(payload, {'a': 0.5, 'b': [0, 1], 'c': None, 'd': [1.0, 2.0]})

    def test_hash_ignores_key_order(self):
        self.assertEqual(config_hash({'a': 1, 'b': [1, 2]}), config_hash({'b': [1, 2], 'a': 1}))
        self.assertNotEqual(config_hash({'a': 1}), config_hash({'a': 2}))

    def test_manifest(self):
        started = datetime(2026, 1, 1, tzinfo=timezone.utc)
        path = write_manifest(self.out, 'simulate', {'task': 'simulate'}, started, started + timedelta(seconds=2),
                              [self.out / 'trajectory_0.csv'], preset='fig8')
        manifest = json.loads(path.read_text())
        self.assertEqual(manifest['artifacts'], ['trajectory_0.csv'])
        self.assertEqual(manifest['duration_s'], 2.0)
        self.assertEqual(manifest['config_sha256'], config_hash({'task': 'simulate'}))
        self.assertIn('numpy', manifest['versions'])
