import math

import numpy as np
from django.test import SimpleTestCase

from Trajectories.errors import NodeProximity
from Trajectories.flow import comoving_velocity, jacobian, velocity, velocity_and_g
from Trajectories.nodal import nodal_closed_form_sphere
from Trajectories.surfaces import IntegralSurface
from Trajectories.wavefunction import WaveSpec

OMEGAS = (1.0, math.sqrt(2.0), math.sqrt(3.0))
S3 = 1 / math.sqrt(3.0)
SPHERE = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]


def sphere_case_velocity(amplitudes, omegas, x, t):
    # Psi ~ sum_j a_j sqrt(w_j) x_j exp(-i E_j t), and E_j - E_k = w_j - w_k
    w = np.asarray(omegas)
    A = np.asarray(amplitudes) * np.sqrt(w)
    beat = np.subtract.outer(w, w) * t
    numerator = A * ((A * x) @ np.sin(beat))
    denominator = (A * x) @ np.cos(beat) @ (A * x)
    return numerator / denominator


class VelocityTests(SimpleTestCase):

    def setUp(self):
        self.spec = WaveSpec.from_numbers([S3, S3, S3], SPHERE, OMEGAS)

    def test_single_eigenstate_is_at_rest(self):
        spec = WaveSpec.from_numbers([1.0, 0.0, 0.0], SPHERE, OMEGAS)
        np.testing.assert_allclose(velocity(spec, (0.5, 0.2, -0.3), 3.0), np.zeros(3), atol=1e-14)

    def test_velocity_is_tangent_to_spheres(self):
        for t in (0.3, 1.7, 5.0):
            x = np.array([0.8, -0.4, 1.1])
            self.assertAlmostEqual(float(x @ velocity(self.spec, x, t)), 0.0, places=10)

    def test_common_phase_does_not_change_velocity(self):
        phase = complex(math.cos(0.7), math.sin(0.7))
        turned = self.spec.with_amplitudes([a * phase for a in self.spec.amplitudes])
        for x in ((0.8, -0.4, 1.1), (-1.2, 0.3, 0.2)):
            np.testing.assert_allclose(velocity(turned, x, 2.3), velocity(self.spec, x, 2.3), atol=1e-12)

    def test_speed_grows_towards_the_node(self):
        node = nodal_closed_form_sphere(self.spec, 1.0, 2.0)
        tangent = np.cross(node.x, (0.0, 0.0, 1.0))
        tangent /= np.linalg.norm(tangent)
        speeds = [np.linalg.norm(velocity(self.spec, node.x + d * tangent, 1.0)) for d in np.geomspace(1e-2, 1e-3, 10)]
        self.assertTrue(all(a < b for a, b in zip(speeds, speeds[1:])))

    def test_sphere_case_closed_form(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            amplitudes = rng.uniform(0.2, 1.0, size=3)
            amplitudes /= np.linalg.norm(amplitudes)
            spec = WaveSpec.from_numbers(list(amplitudes), SPHERE, OMEGAS)
            x, t = rng.uniform(-2.0, 2.0, size=3), rng.uniform(0.0, 30.0)
            np.testing.assert_allclose(velocity(spec, x, t), sphere_case_velocity(amplitudes, OMEGAS, x, t),
                                       rtol=1e-9, atol=1e-12)

    def test_node_raises(self):
        node = nodal_closed_form_sphere(self.spec, 1.0, 2.0)
        with self.assertRaises(NodeProximity) as ctx:
            velocity_and_g(self.spec, node.x, 1.0, g_floor=1e-20)
        self.assertEqual(ctx.exception.t, 1.0)

    def test_jacobian_trace_matches_divergence(self):
        x, t = np.array([0.5, 0.3, -0.7]), 0.9
        jac = jacobian(self.spec, x, t)
        h = 1e-5
        div = sum((velocity(self.spec, x + h * e, t)[k] - velocity(self.spec, x - h * e, t)[k]) / (2 * h)
                  for k, e in enumerate(np.eye(3)))
        self.assertAlmostEqual(float(np.trace(jac)), div, places=5)


class ComovingTests(SimpleTestCase):

    def setUp(self):
        self.spec = WaveSpec.from_numbers([S3, S3, S3], SPHERE, OMEGAS)
        self.node = nodal_closed_form_sphere(self.spec, 1.0, 3.0)

    def test_rejects_offsets_below_floor(self):
        with self.assertRaises(NodeProximity):
            comoving_velocity(self.spec, self.node, np.zeros(3), frame_velocity=np.zeros(3))

    def test_relative_velocity(self):
        frame = np.array([0.1, -0.2, 0.05])
        p = np.array([0.05, 0.02, -0.01])
        flow = comoving_velocity(self.spec, self.node, p, frame_velocity=frame)
        np.testing.assert_allclose(flow.u, velocity(self.spec, self.node.x + p, 1.0) - frame, atol=1e-14)
        np.testing.assert_allclose(flow.origin, self.node.x)

    def test_estimates_node_velocity_on_surface(self):
        p = np.array([0.05, 0.02, -0.01])
        flow = comoving_velocity(self.spec, self.node, p, surface=IntegralSurface.sphere(3.0))
        # the node moves on the sphere, so its velocity is tangent
        self.assertAlmostEqual(float(flow.frame_velocity @ self.node.x), 0.0, places=5)
