"""
Bohmian velocity field v_i = (dPsi_I/dx_i Psi_R - dPsi_R/dx_i Psi_I) / G and the flow seen
from a frame co-moving with a nodal point.
"""
from dataclasses import dataclass

import numpy as np

from .errors import BohmError, NodeProximity, TrackUnavailable
from .wavefunction import WaveSpec, sample

G_FLOOR = 1e-30
P_FLOOR = 1e-8


def velocity_and_g(spec: WaveSpec, x, t: float, g_floor: float = G_FLOOR):
    """Velocity and the G value it was computed from; raises NodeProximity at or below g_floor."""
    s = sample(spec, x, t)
    if not s.g > g_floor:
        raise NodeProximity(np.asarray(x, dtype=float), t, s.g)
    return (s.grad_im * s.psi_re - s.grad_re * s.psi_im) / s.g, s.g


def velocity(spec: WaveSpec, x, t: float, g_floor: float = G_FLOOR) -> np.ndarray:
    """
    Bohmian velocity (dx/dt, dy/dt, dz/dt) at x and t.

    Parameters:
        spec (WaveSpec): The guiding wavefunction.
        x (array-like): Position, shape (3,).
        t (float): Time.
        g_floor (float): Smallest G accepted before the point counts as a node.

    Returns:
        ndarray: The velocity, shape (3,).

    Raises:
        NodeProximity: If G(x, t) <= g_floor.
    """
    v, _ = velocity_and_g(spec, x, t, g_floor)
    return v


def jacobian(spec: WaveSpec, x, t: float, g_floor: float = G_FLOOR) -> np.ndarray:
    """
    dv_i/dx_j by central differences with step max(1e-6, 1e-6 |x|).
    """
    x = np.asarray(x, dtype=float)
    h = max(1e-6, 1e-6 * float(np.linalg.norm(x)))
    jac = np.empty((3, 3))
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        jac[:, j] = (velocity(spec, x + step, t, g_floor) - velocity(spec, x - step, t, g_floor)) / (2.0 * h)
    return jac


@dataclass(frozen=True)
class ComovingFlow:
    origin: np.ndarray
    u: np.ndarray
    frame_velocity: np.ndarray


def comoving_velocity(spec: WaveSpec, node, p, t: float = None, frame_velocity=None, surface=None,
                      dt_node: float = 1e-4, p_floor: float = P_FLOOR,
                      g_floor: float = G_FLOOR) -> ComovingFlow:
    """
    Relative flow u = v(node + p) - (node velocity) at time t.

    Parameters:
        spec (WaveSpec): The guiding wavefunction.
        node (NodalPoint): The instantaneous nodal point (frame origin).
        p (array-like): Offset from the node.
        t (float): Time; defaults to the node's time.
        frame_velocity (ndarray): Node velocity if already known; otherwise it is estimated
            by re-solving the node at t +/- dt_node.
        surface (IntegralSurface): Keeps the node estimate on this surface when given.

    Returns:
        ComovingFlow: origin, relative velocity u and the frame velocity used.

    Raises:
        NodeProximity: If |p| < p_floor or G at the evaluation point is below g_floor.
        TrackUnavailable: If the node velocity cannot be estimated.
    """
    t = node.t if t is None else t
    p = np.asarray(p, dtype=float)
    if np.linalg.norm(p) < p_floor:
        raise NodeProximity(node.x + p, t, 0.0)
    if frame_velocity is None:
        from .nodal import node_velocity

        try:
            frame_velocity = node_velocity(spec, node, dt_node=dt_node, surface=surface)
        except BohmError as err:
            raise TrackUnavailable(f'node velocity at t={t:.6f} could not be estimated: {err}') from err
    v = velocity(spec, node.x + p, t, g_floor)
    return ComovingFlow(origin=np.asarray(node.x, dtype=float), u=v - frame_velocity,
                        frame_velocity=np.asarray(frame_velocity, dtype=float))
