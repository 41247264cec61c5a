import math

import numpy as np
from django.test import SimpleTestCase
from pydantic import ValidationError

from Trajectories.errors import DomainError, StepUnderflow
from Trajectories.integrator import (IntegratorConfig, _hermite, integrate, integrate_batch, retrace_error,
                                     rkf45, sample_grid)
from Trajectories.surfaces import Family, IntegralSurface
from Trajectories.wavefunction import WaveSpec

OMEGAS = (1.0, math.sqrt(2.0), math.sqrt(3.0))
SPHERE = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]


def ordered_sphere_spec():
    return WaveSpec.from_numbers([math.sqrt(0.98), 0.1, 0.1], SPHERE, OMEGAS)


class ConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = IntegratorConfig()
        self.assertEqual((cfg.abs_tol, cfg.rel_tol), (1e-7, 1e-6))

    def test_step_order_is_enforced(self):
        with self.assertRaises(ValidationError):
            IntegratorConfig(h_min=1e-2, h_init=1e-3)

    def test_unknown_field(self):
        with self.assertRaises(ValidationError):
            IntegratorConfig(tolerance=1e-3)


class RKF45Tests(SimpleTestCase):

    def test_exponential_decay(self):
        cfg = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10)
        sol = rkf45(lambda t, y: -y, [1.0], 0.0, 5.0, cfg)
        self.assertAlmostEqual(float(sol.states[-1][0]), math.exp(-5.0), places=9)
        self.assertEqual(sol.times[-1], 5.0)

    def test_backwards(self):
        sol = rkf45(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0], 0.0, -3.0,
                    IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10))
        self.assertAlmostEqual(float(sol.states[-1][0]), math.sin(-3.0), places=8)
        self.assertTrue(np.all(np.diff(sol.times) < 0))

    def test_dense_samples(self):
        grid = sample_grid(0.0, 2.0, 0.25)
        sol = rkf45(lambda t, y: np.cos(t) * np.ones(1), [0.0], 0.0, 2.0,
                    IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10), sample_times=grid)
        np.testing.assert_array_equal(sol.times, grid)
        np.testing.assert_allclose(sol.states[:, 0], np.sin(grid), atol=1e-6)

    def test_dense_output_error_is_fourth_order_in_the_step(self):
        def worst(h):
            taus = np.linspace(0.3, 0.3 + h, 11)
            values = [_hermite(0.3, math.sin(0.3), math.cos(0.3), 0.3 + h, math.sin(0.3 + h), math.cos(0.3 + h), tau)
                      for tau in taus]
            return float(np.max(np.abs(np.array(values) - np.sin(taus))))

        coarse, fine = worst(0.2), worst(0.1)
        self.assertLess(coarse, 0.2 ** 4 / 300)
        self.assertGreater(coarse / fine, 14.0)

    def test_callback_can_stop(self):
        sol = rkf45(lambda t, y: np.ones(1), [0.0], 0.0, 10.0, callback=lambda t, y: False if t > 1.0 else None)
        self.assertTrue(sol.stopped)
        self.assertLess(sol.times[-1], 10.0)

    def test_step_underflow(self):
        # a blow-up at t = 1 cannot be crossed
        with self.assertRaises(StepUnderflow):
            rkf45(lambda t, y: y * y, [1.0], 0.0, 2.0, IntegratorConfig(h_min=1e-6))

    def test_rejects_bad_samples(self):
        with self.assertRaises(DomainError):
            rkf45(lambda t, y: y, [1.0], 0.0, 1.0, sample_times=[0.5, 0.2])


class SampleGridTests(SimpleTestCase):

    def test_includes_end(self):
        np.testing.assert_allclose(sample_grid(0.0, 1.0, 0.4), [0.0, 0.4, 0.8, 1.0])
        np.testing.assert_allclose(sample_grid(1.0, 0.0, 0.5), [1.0, 0.5, 0.0])

    def test_rejects_non_positive(self):
        with self.assertRaises(DomainError):
            sample_grid(0.0, 1.0, 0.0)


class IntegrateTests(SimpleTestCase):

    def test_equal_times_rejected(self):
        with self.assertRaises(DomainError):
            integrate(ordered_sphere_spec(), (1.0, 0.0, 1.0), 2.0, 2.0)

    def test_stationary_orbit(self):
        spec = WaveSpec.from_numbers([1.0, 0.0, 0.0], SPHERE, OMEGAS)
        x0 = np.array([1.0, 0.3, -0.2])
        traj = integrate(spec, x0, 0.0, 10.0, sample_dt=1.0, surface=IntegralSurface.through(Family.SPHERE, x0))
        np.testing.assert_allclose(traj.points, np.tile(x0, (len(traj), 1)), atol=1e-12)
        np.testing.assert_allclose(traj.surface_drift, 0.0, atol=1e-12)

    def test_sphere_is_conserved(self):
        x0 = (1.0, 0.0, 1.0)
        surface = IntegralSurface.through(Family.SPHERE, x0)
        traj = integrate(ordered_sphere_spec(), x0, 0.0, 20.0, sample_dt=0.05, surface=surface)
        self.assertLess(float(np.max(np.abs(traj.surface_drift))), 1e-5)
        self.assertEqual(traj.times[0], 0.0)
        self.assertEqual(traj.times[-1], 20.0)
        self.assertGreater(traj.min_g_seen, 0.0)
        self.assertEqual(list(traj.to_frame().columns), ['t', 'x', 'y', 'z', 'drift'])

    def test_backward_times_decrease(self):
        traj = integrate(ordered_sphere_spec(), (1.0, 0.0, 1.0), 5.0, 0.0)
        self.assertTrue(np.all(np.diff(traj.times) < 0))

    def test_retrace(self):
        spec = ordered_sphere_spec()
        self.assertEqual(retrace_error(spec, (1.0, 0.0, 1.0), 0.0, 0.0), 0.0)
        self.assertLess(retrace_error(spec, (1.0, 0.0, 1.0), 0.0, 10.0), 1e-4)

    def test_tighter_tolerance_shrinks_retrace_error(self):
        spec = ordered_sphere_spec()
        errors = [retrace_error(spec, (1.0, 0.0, 1.0), 0.0, 10.0, IntegratorConfig(abs_tol=tol / 10, rel_tol=tol))
                  for tol in (1e-4, 1e-6, 1e-8)]
        self.assertLess(errors[1], errors[0])
        self.assertLess(errors[2], errors[1])
        self.assertLess(errors[2], 1e-6)

    def test_batch_matches_sequential(self):
        spec = ordered_sphere_spec()
        initials = [(1.0, 0.0, 1.0), (0.5, 0.5, 0.5), (1.2, -0.3, 0.4)]
        threaded = integrate_batch(spec, initials, 0.0, 3.0, threads=3, sample_dt=0.1)
        for x0, traj in zip(initials, threaded):
            alone = integrate(spec, x0, 0.0, 3.0, sample_dt=0.1)
            np.testing.assert_array_equal(traj.points, alone.points)
