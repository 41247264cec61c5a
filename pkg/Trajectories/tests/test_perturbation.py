import math

import numpy as np
from django.test import SimpleTestCase

from Trajectories.errors import DomainError, SecularTerm, SmallDivisor
from Trajectories.integrator import IntegratorConfig, integrate
from Trajectories.perturbation import (NONINTEGRABLE_QUANTA, SPHERE_QUANTA, IntegralKind, deviation,
                                       formal_integral_surface, formal_integrals, iterate_order,
                                       order1_nonintegrable, order1_sphere)
from Trajectories.wavefunction import WaveSpec

OMEGAS = (1.0, math.sqrt(2.0), math.sqrt(3.0))
A = math.sqrt(0.98)
TIMES = np.linspace(0.0, 12.0, 97)


def sphere_spec(omegas=OMEGAS):
    return WaveSpec.from_numbers([A, 0.1, 0.1], SPHERE_QUANTA, omegas)


def nonintegrable_spec():
    return WaveSpec.from_numbers([A, 0.1, 0.1], NONINTEGRABLE_QUANTA, OMEGAS)


class SeriesTests(SimpleTestCase):

    def test_series_starts_at_the_base_point(self):
        series = iterate_order(nonintegrable_spec(), (0.6, 0.6, 0.6), order=2, t0=2.0)
        np.testing.assert_array_equal(series.evaluate(2.0), [0.6, 0.6, 0.6])
        self.assertEqual(series.evaluate(TIMES).shape, (len(TIMES), 3))

    def test_generic_first_order_matches_sphere_formula(self):
        base = (1.0, 0.5, 0.7)
        generic = iterate_order(sphere_spec(), base, order=1)
        closed = order1_sphere(sphere_spec(), base)
        np.testing.assert_allclose(generic.evaluate(TIMES), closed.evaluate(TIMES), atol=1e-12)

    def test_generic_first_order_matches_nonintegrable_formula(self):
        base = (0.6, 0.6, 0.6)
        generic = iterate_order(nonintegrable_spec(), base, order=1)
        closed = order1_nonintegrable(nonintegrable_spec(), base)
        np.testing.assert_allclose(generic.evaluate(TIMES), closed.evaluate(TIMES), atol=1e-12)
        self.assertEqual(generic.frequencies(), {(1, 0), (0, 1)})

    def test_second_order_adds_combination_harmonics(self):
        series = iterate_order(nonintegrable_spec(), (0.6, 0.6, 0.6), order=2)
        self.assertIn((1, 1), series.frequencies())
        self.assertIn((2, 0), series.frequencies())
        payload = series.to_dict()
        self.assertEqual(payload['order'], 2)
        self.assertEqual(sorted(payload['terms']), ['x', 'y', 'z'])

    def test_order_and_modes_are_checked(self):
        with self.assertRaises(DomainError):
            iterate_order(sphere_spec(), (1.0, 0.5, 0.5), order=3)
        with self.assertRaises(DomainError):
            order1_sphere(nonintegrable_spec(), (1.0, 0.5, 0.5))
        with self.assertRaises(DomainError):
            order1_nonintegrable(sphere_spec(), (1.0, 0.5, 0.5))

    def test_small_divisor_on_the_leading_node(self):
        with self.assertRaises(SmallDivisor):
            order1_sphere(sphere_spec(), (1e-8, 0.5, 0.5))
        with self.assertRaises(SmallDivisor):
            iterate_order(sphere_spec(), (0.0, 0.5, 0.5))

    def test_resonant_frequencies_are_secular(self):
        # omegas (2, 1, 1) give D_b = D_c, so the b-c beat has zero frequency
        spec = sphere_spec((2.0, 1.0, 1.0))
        iterate_order(spec, (1.0, 0.5, 0.5), order=1)
        with self.assertRaises(SecularTerm):
            iterate_order(spec, (1.0, 0.5, 0.5), order=2)


class FormalIntegralTests(SimpleTestCase):

    def test_sphere_series_stays_on_the_tangent_plane(self):
        base = np.array([1.0, 0.5, 0.7])
        series = order1_sphere(sphere_spec(), base)
        surface = formal_integral_surface(series)
        self.assertEqual(surface.kind, IntegralKind.TIME_INDEPENDENT)
        np.testing.assert_allclose(np.cross(surface.normal, base), 0.0, atol=1e-12)
        for point in series.evaluate(TIMES):
            self.assertLess(abs(surface.residual(point)), 1e-12)

    def test_nonintegrable_series_satisfies_its_plane(self):
        series = order1_nonintegrable(nonintegrable_spec(), (0.6, 0.6, 0.6))
        surface = formal_integral_surface(series)
        for point in series.evaluate(TIMES):
            self.assertLess(abs(surface.residual(point)), 1e-12)

    def test_time_dependent_integrals_on_the_principal_branch(self):
        series = iterate_order(nonintegrable_spec(), (0.6, 0.6, 0.6), order=1)
        integrals = formal_integrals(series)
        self.assertEqual([i.label for i in integrals], ['b', 'c', 'surface'])
        t = 0.3
        point = series.evaluate(t)
        for integral in integrals[:2]:
            self.assertEqual(integral.kind, IntegralKind.TIME_DEPENDENT)
            self.assertLess(abs(integral.residual(point, t)), 1e-9)
        with self.assertRaises(DomainError):
            integrals[0].residual(point)

    def test_second_order_surface_through_the_angles(self):
        series = iterate_order(nonintegrable_spec(), (0.6, 0.6, 0.6), order=2)
        surface = formal_integral_surface(series)
        self.assertIsNone(surface.normal)
        self.assertLess(abs(surface.residual(series.evaluate(0.3))), 1e-9)


class DeviationTests(SimpleTestCase):

    def setUp(self):
        self.spec = nonintegrable_spec()
        self.base = (0.6, 0.6, 0.6)
        cfg = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10)
        self.traj = integrate(self.spec, self.base, 0.0, 20.0, cfg, sample_dt=0.05)

    def test_columns_and_grid(self):
        frame = deviation(iterate_order(self.spec, self.base, order=1), self.traj, dt=0.05)
        self.assertEqual(list(frame.columns), ['t', 'sigma_x', 'sigma_y', 'sigma_z'])
        self.assertAlmostEqual(frame['t'].iloc[0], 0.0)
        self.assertAlmostEqual(frame['t'].iloc[-1], 20.0)
        self.assertLess(frame.iloc[0][['sigma_x', 'sigma_y', 'sigma_z']].max(), 1e-12)

    def test_second_order_tracks_the_orbit_better(self):
        first = deviation(iterate_order(self.spec, self.base, order=1), self.traj)
        second = deviation(iterate_order(self.spec, self.base, order=2), self.traj)
        cols = ['sigma_x', 'sigma_y', 'sigma_z']
        mean1 = first[cols].to_numpy().mean()
        mean2 = second[cols].to_numpy().mean()
        self.assertLess(mean2, mean1)
        self.assertLess(mean2, 5e-3)
