import itertools
import math

import numpy as np
from django.test import SimpleTestCase

from Trajectories.errors import DomainError, NoSurface, OffSurface, OutOfRange, UnsupportedSurface
from Trajectories.surfaces import (Family, IntegrabilityKind, IntegralSurface, classify_integrability, classify_quanta,
                                   meridian_length_to, pear_arc_length, pear_coords, pear_z_range, phi_and_extrema,
                                   sphere_coords, surface_family, surface_value)
from Trajectories.wavefunction import WaveSpec

OMEGAS = (1.0, math.sqrt(2.0), math.sqrt(3.0))
W3 = OMEGAS[2]
S3 = 1 / math.sqrt(3.0)

# condition table written out per axis: (which triplet, equals which triplet, coordinate)
CONDITIONS = {
    1: [('r', 'p', 0), ('s', 'r', 1), ('s', 'p', 2)],
    2: [('r', 'p', 0), ('s', 'p', 1), ('s', 'r', 2)],
    3: [('s', 'r', 0), ('r', 'p', 1), ('s', 'p', 2)],
    4: [('s', 'r', 0), ('s', 'p', 1), ('r', 'p', 2)],
    5: [('s', 'p', 0), ('r', 'p', 1), ('s', 'r', 2)],
    6: [('s', 'p', 0), ('s', 'r', 1), ('r', 'p', 2)],
}


def brute_force(p, r, s):
    triplets = {'p': p, 'r': r, 's': s}
    cases = [case for case, checks in CONDITIONS.items()
             if all(triplets[a][k] == triplets[b][k] for a, b, k in checks)]
    if len({p, r, s}) < 3 or len(cases) >= 2:
        return IntegrabilityKind.FULLY_INTEGRABLE, cases
    return (IntegrabilityKind.PARTIAL if cases else IntegrabilityKind.NONE), cases


class ClassifierTests(SimpleTestCase):

    def test_exhaustive_against_brute_force(self):
        triplets = list(itertools.product(range(3), repeat=3))
        for p, r, s in itertools.product(triplets, repeat=3):
            result = classify_quanta([p, r, s])
            kind, cases = brute_force(p, r, s)
            self.assertEqual(result.kind, kind, (p, r, s))
            self.assertEqual(list(result.matched_cases), cases, (p, r, s))

    def test_single_conditions_are_partial(self):
        examples = {
            1: [(0, 0, 0), (0, 1, 2), (1, 1, 0)],
            2: [(0, 0, 0), (0, 1, 2), (1, 0, 2)],
            3: [(0, 0, 0), (1, 0, 2), (1, 1, 0)],
            4: [(1, 0, 0), (0, 1, 0), (0, 0, 1)],
            5: [(0, 0, 0), (1, 0, 2), (0, 1, 2)],
            6: [(0, 0, 0), (1, 1, 0), (0, 1, 2)],
        }
        for case, quanta in examples.items():
            result = classify_quanta(quanta)
            self.assertEqual(result.kind, IntegrabilityKind.PARTIAL, quanta)
            self.assertEqual(result.matched_cases, (case,))

    def test_double_condition_is_fully_integrable(self):
        result = classify_quanta([(0, 1, 0), (0, 1, 0), (0, 1, 1)])
        self.assertEqual(result.matched_cases, (4, 6))
        self.assertEqual(result.kind, IntegrabilityKind.FULLY_INTEGRABLE)

    def test_studied_cases(self):
        self.assertEqual(classify_quanta([(0, 0, 0), (1, 0, 1), (0, 1, 2)]).kind, IntegrabilityKind.NONE)
        self.assertEqual(classify_quanta([(0, 0, 0), (1, 1, 0), (1, 0, 2)]).kind, IntegrabilityKind.PARTIAL)
        self.assertEqual(classify_quanta([(1, 0, 0), (0, 1, 0), (0, 0, 2)]).kind, IntegrabilityKind.PARTIAL)

    def test_zero_amplitude_reduces_to_two_terms(self):
        spec = WaveSpec.from_numbers([math.sqrt(0.5), math.sqrt(0.5), 0.0], [(0, 0, 0), (1, 0, 1), (0, 1, 2)], OMEGAS)
        self.assertEqual(classify_integrability(spec).kind, IntegrabilityKind.FULLY_INTEGRABLE)

    def test_family(self):
        spec = WaveSpec.from_numbers([S3, S3, S3], [(0, 0, 1), (1, 0, 0), (0, 1, 0)], OMEGAS)
        self.assertEqual(surface_family(spec), Family.SPHERE)
        spec = WaveSpec.from_numbers([S3, S3, S3], [(0, 0, 0), (1, 0, 1), (0, 1, 2)], OMEGAS)
        self.assertEqual(surface_family(spec), Family.GENERIC)


class SurfaceTests(SimpleTestCase):

    def test_pear_constants(self):
        _, z0, c0 = phi_and_extrema(W3)
        self.assertEqual(round(z0, 4), 0.5373)
        self.assertEqual(round(c0, 4), 0.3237)

    def test_values(self):
        self.assertAlmostEqual(surface_value(Family.SPHERE, (1.0, 2.0, 2.0)), 9.0)
        self.assertAlmostEqual(surface_value(Family.OPEN, (0.0, 1 / math.sqrt(2.0), 1.0), W3), 1.0)
        self.assertAlmostEqual(surface_value(Family.PEAR, (0.0, 0.0, 1.0), W3), 0.5)
        grid = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 2.0]])
        self.assertEqual(surface_value(Family.PEAR, grid, W3).shape, (2,))

    def test_undefined_at_z_zero(self):
        with self.assertRaises(DomainError):
            surface_value(Family.PEAR, (1.0, 0.0, 0.0), W3)
        with self.assertRaises(UnsupportedSurface):
            surface_value(Family.GENERIC, (1.0, 0.0, 1.0))

    def test_gradient_matches_finite_differences(self):
        surface = IntegralSurface(Family.OPEN, 1.0, W3)
        x, h = np.array([0.3, 0.8, 1.2]), 1e-6
        fd = [(surface.value(x + h * e) - surface.value(x - h * e)) / (2 * h) for e in np.eye(3)]
        np.testing.assert_allclose(surface.gradient(x), fd, atol=1e-8)

    def test_invalid_levels(self):
        with self.assertRaises(NoSurface):
            IntegralSurface(Family.SPHERE, 0.0)
        with self.assertRaises(NoSurface):
            IntegralSurface(Family.PEAR, 0.3, W3)
        with self.assertRaises(NoSurface):
            pear_z_range(0.3, W3)

    def test_through(self):
        surface = IntegralSurface.through(Family.PEAR, (0.2, 0.1, 1.4), W3)
        self.assertAlmostEqual(surface.residual((0.2, 0.1, 1.4)), 0.0, places=14)
        self.assertAlmostEqual(IntegralSurface.sphere(3.0).c_value, 9.0)

    def test_pear_range(self):
        phi, z0, _ = phi_and_extrema(W3)
        z_min, z_max = pear_z_range(1.0, W3)
        self.assertLess(z_min, z0)
        self.assertGreater(z_max, z0)
        self.assertAlmostEqual(float(phi(z_min)), 1.0, places=10)
        self.assertAlmostEqual(float(phi(z_max)), 1.0, places=10)


class CoordinateTests(SimpleTestCase):

    def test_sphere_coords(self):
        coords = sphere_coords((2.0, 0.0, 0.0))
        self.assertAlmostEqual(coords.theta, math.pi / 2)
        self.assertEqual(coords.phi, 0.0)
        self.assertTrue(sphere_coords((0.0, 0.0, 1.0)).pole_degenerate)
        with self.assertRaises(DomainError):
            sphere_coords((0.0, 0.0, 0.0))

    def test_meridian_length(self):
        z_min, z_max = pear_z_range(1.0, W3)
        self.assertEqual(meridian_length_to(z_min, z_min, z_max, W3), 0.0)
        length = pear_arc_length(1.0, W3)
        self.assertGreater(length, z_max - z_min)
        zs = np.linspace(z_min, z_max, 9)
        s = [meridian_length_to(z, z_min, z_max, W3) for z in zs]
        self.assertTrue(np.all(np.diff(s) > 0))
        self.assertAlmostEqual(s[-1], length, places=9)

    def test_meridian_length_of_a_short_arc(self):
        # away from the turning points ds = sqrt(1 + rho'(z)^2) dz
        phi, _, _ = phi_and_extrema(W3)
        z_min, z_max = pear_z_range(1.0, W3)
        a, b = 0.8, 0.9

        def rho(z):
            return math.sqrt(1.0 - float(phi(z)))

        zs = np.linspace(a, b, 2001)
        slopes = np.gradient([rho(z) for z in zs], zs)
        expected = np.trapz(np.sqrt(1 + slopes ** 2), zs)
        got = meridian_length_to(b, z_min, z_max, W3) - meridian_length_to(a, z_min, z_max, W3)
        self.assertAlmostEqual(got, expected, places=5)

    def test_pear_coords(self):
        phi, _, _ = phi_and_extrema(W3)
        z = 0.9
        rho = math.sqrt(1.0 - float(phi(z)))
        point = (rho * math.cos(0.4), rho * math.sin(0.4), z)
        coords = pear_coords(point, 1.0, W3, z_ref=z)
        self.assertAlmostEqual(coords.s, 0.0, places=12)
        self.assertAlmostEqual(coords.phi, 0.4, places=12)
        self.assertGreater(pear_coords(point, 1.0, W3, z_ref=0.7).s, 0.0)
        with self.assertRaises(OffSurface):
            pear_coords((rho + 0.01, 0.0, z), 1.0, W3, z_ref=z)
        with self.assertRaises(OutOfRange):
            pear_coords((rho, 0.0, -z), 1.0, W3, z_ref=z)
