"""
Nodal points (Psi = 0), their motion in time and the X-points that accompany them.

All root finding works on the envelope-free polynomial part of Psi, which has the same zeros
as Psi but does not underflow far from the origin.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
from scipy import optimize

from .eigenbasis import basis_jet
from .errors import (BohmError, Degenerate, DomainError, Indeterminate, LargeVelocity, LostTrack,
                     NewtonDiverged, NoConvergence, NodeProximity, NotFound, UnsupportedSurface)
from .flow import P_FLOOR, velocity
from .integrator import IntegratorConfig, rkf45, sample_grid
from .surfaces import Family, IntegralSurface, phi_and_extrema, sphere_coords, surface_family
from .wavefunction import WaveSpec, sample, time_derivative

RESIDUAL_TOL = 1e-9
BLOWUP_CUTOFF = 1e3
CONTINUITY_FACTOR = 10.0
CONTINUITY_FLOOR = 1e-6
RESCAN_LIMIT = 500
# slope of the nodal line against its parameterising coordinate beyond which another axis takes over
PARAM_SWITCH = 1e3


class NodalMethod(str, Enum):
    CLOSED_FORM = 'CLOSED_FORM'
    ROOTFIND = 'ROOTFIND'
    FPLANE = 'FPLANE'
    SURF_NEWTON = 'SURF_NEWTON'
    SURF_ODE = 'SURF_ODE'


@dataclass(frozen=True)
class NodalPoint:
    x: np.ndarray
    t: float
    method: NodalMethod
    residual: float

    def moved(self, method: NodalMethod) -> 'NodalPoint':
        return NodalPoint(self.x, self.t, method, self.residual)


@dataclass(frozen=True)
class BlowupEvent:
    t_lost: float
    x_lost: np.ndarray
    t_resumed: float = None


@dataclass(frozen=True)
class NodalTrack:
    points: tuple
    method: NodalMethod
    continuous: bool = True
    blowups: tuple = ()
    solves: int = 0
    normals: np.ndarray = None
    axes: np.ndarray = None

    def __len__(self):
        return len(self.points)

    @property
    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.x for p in self.points]).reshape(-1, 3)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([p.residual for p in self.points])

    def mirrored(self) -> 'NodalTrack':
        """The antipodal branch x -> -x, a node too whenever Psi is odd under inversion."""
        points = tuple(NodalPoint(-p.x, p.t, p.method, p.residual) for p in self.points)
        return NodalTrack(points, self.method, self.continuous, self.blowups, self.solves, self.normals, self.axes)

    def at(self, times) -> np.ndarray:
        """Node positions linearly interpolated at the given times."""
        ts, xs = self.times, self.positions
        times = np.asarray(times, dtype=float)
        return np.stack([np.interp(times, ts, xs[:, k]) for k in range(3)], axis=-1)

    def to_frame(self) -> pd.DataFrame:
        resumed = {e.t_resumed for e in self.blowups if e.t_resumed is not None}
        xs = self.positions
        return pd.DataFrame({
            't': self.times,
            'x': xs[:, 0],
            'y': xs[:, 1],
            'z': xs[:, 2],
            'method': [p.method.value for p in self.points],
            'residual': self.residuals,
            'blowup_flag': [p.t in resumed for p in self.points],
        })


@dataclass(frozen=True)
class XPoint:
    x: np.ndarray
    t: float
    eigvals: tuple
    paired_node: NodalPoint
    chart: tuple = ()
    residual: float = 0.0


def _node_system(spec: WaveSpec, x, t):
    s = sample(spec, x, t, envelope=False)
    return np.array([s.psi_re, s.psi_im]), np.vstack([s.grad_re, s.grad_im])


def _residual_scale(spec: WaveSpec, x) -> float:
    values, _ = basis_jet(spec.quanta, spec.omegas, np.asarray(x, dtype=float), envelope=False)
    return max(1.0, float(np.abs(values) @ np.abs(np.asarray(spec.amplitudes))))


def _on_nodal_line(spec: WaveSpec, x, t) -> bool:
    f, _ = _node_system(spec, x, t)
    return float(np.linalg.norm(f)) <= RESIDUAL_TOL * _residual_scale(spec, x)


def _make_point(spec: WaveSpec, x, t, method: NodalMethod) -> NodalPoint:
    return NodalPoint(np.array(x, dtype=float), float(t), method, math.sqrt(sample(spec, x, t).g))


def _tangent(spec: WaveSpec, x, t) -> np.ndarray:
    _, jac = _node_system(spec, x, t)
    tangent = np.cross(jac[0], jac[1])
    norm = np.linalg.norm(tangent)
    if norm == 0:
        raise Degenerate(f'nodal line has no tangent at t={t:.6f}')
    return tangent / norm


def _param_tangent(spec: WaveSpec, x, t, axis: int):
    # the nodal line as x_other(x_axis): tangent (dx_other/dx_axis, 1), None where that fails
    other = [i for i in range(3) if i != axis]
    _, jac = _node_system(spec, x, t)
    try:
        slope = np.linalg.solve(jac[:, other], -jac[:, axis])
    except np.linalg.LinAlgError:
        return None
    tangent = np.zeros(3)
    tangent[axis] = 1.0
    tangent[other] = slope
    return tangent


def _free_velocity(spec: WaveSpec, x, t) -> np.ndarray:
    # minimum-norm motion of the node, i.e. within the plane orthogonal to the nodal line
    _, jac = _node_system(spec, x, t)
    rate = np.array(time_derivative(spec, x, t, envelope=False))
    return np.linalg.lstsq(jac, -rate, rcond=None)[0]


def _surface_velocity(spec: WaveSpec, surface: IntegralSurface, x, t) -> np.ndarray:
    _, jac = _node_system(spec, x, t)
    rate = np.array(time_derivative(spec, x, t, envelope=False))
    system = np.vstack([jac, surface.gradient(x)])
    try:
        return np.linalg.solve(system, np.array([-rate[0], -rate[1], 0.0]))
    except np.linalg.LinAlgError as err:
        raise Degenerate(f'nodal line is tangent to the surface at t={t:.6f}') from err


def nodal_closed_form_sphere(spec: WaveSpec, t: float, R: float) -> NodalPoint:
    """
    The nodal point on the sphere of radius R for the modes 100/010/001 with real amplitudes.

    x = S sin(w32 t)/(a sqrt(w1)), y = S sin(w13 t)/(b sqrt(w2)), z = S sin(w21 t)/(c sqrt(w3)),
    with S > 0 fixing |x| = R.

    Raises:
        DomainError: For other modes, complex amplitudes or a zero amplitude.
        Indeterminate: When all three sines vanish together.
    """
    if surface_family(spec) != Family.SPHERE:
        raise DomainError(f'nodal_closed_form_sphere(): modes {spec.quanta} are not 100/010/001')
    if any(a.imag != 0 for a in spec.amplitudes):
        raise DomainError('nodal_closed_form_sphere(): amplitudes must be real')
    amps = np.empty(3)
    for amp, quanta in zip(spec.amplitudes, spec.quanta):
        amps[quanta.index(1)] = amp.real
    if np.any(amps == 0):
        raise DomainError('nodal_closed_form_sphere(): all three amplitudes must be nonzero')
    w1, w2, w3 = spec.omegas
    sines = np.array([math.sin((w3 - w2) * t), math.sin((w1 - w3) * t), math.sin((w2 - w1) * t)])
    u = sines / (amps * np.sqrt(spec.omegas))
    norm = np.linalg.norm(u)
    if norm < 1e-12:
        raise Indeterminate(f'nodal_closed_form_sphere(): direction undefined at t={t}')
    x = R * u / norm
    return _make_point(spec, x, t, NodalMethod.CLOSED_FORM)


def closed_form_track(spec: WaveSpec, R: float, t0: float, t1: float, dt: float) -> NodalTrack:
    points = tuple(nodal_closed_form_sphere(spec, t, R) for t in sample_grid(t0, t1, dt))
    return NodalTrack(points, NodalMethod.CLOSED_FORM)


def nodal_find(spec: WaveSpec, t: float, guess, max_iter: int = 50, tol: float = 1e-11,
               max_excursion: float = 2.0) -> NodalPoint:
    """
    Gauss-Newton refinement of a nodal point from a guess.

    Each update is the minimum-norm solution of the 2x3 linearised system, so the iteration
    lands on the point of the nodal line closest to the guess.

    Parameters:
        spec (WaveSpec): The wavefunction.
        t (float): Time.
        guess (array-like): Starting point.
        max_iter (int): Iteration cap.
        tol (float): Relative step size at which the iteration stops.
        max_excursion (float): Largest distance from the guess before giving up.

    Returns:
        NodalPoint: method ROOTFIND.

    Raises:
        NoConvergence: If no node is reached.
    """
    guess = np.asarray(guess, dtype=float)
    x = guess.copy()
    for _ in range(max_iter):
        f, jac = _node_system(spec, x, t)
        step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        x = x + step
        if not np.all(np.isfinite(x)) or np.linalg.norm(x - guess) > max_excursion:
            raise NoConvergence(f'nodal_find(): left the search region around {guess} at t={t:.6f}')
        if np.linalg.norm(step) < tol * (1.0 + np.linalg.norm(x)):
            if _on_nodal_line(spec, x, t):
                return _make_point(spec, x, t, NodalMethod.ROOTFIND)
            break
    raise NoConvergence(f'nodal_find(): no node near {guess} at t={t:.6f}')


def solve_on_surface(spec: WaveSpec, surface: IntegralSurface, t: float, guess, max_iter: int = 50,
                     tol: float = 1e-12, method: NodalMethod = NodalMethod.ROOTFIND) -> NodalPoint:
    """Newton on (Psi_R, Psi_I, f - C) = 0: the node where the nodal line pierces the surface."""
    x = np.array(guess, dtype=float)
    for _ in range(max_iter):
        f, jac = _node_system(spec, x, t)
        try:
            system = np.vstack([jac, surface.gradient(x)])
            step = np.linalg.solve(system, -np.append(f, surface.residual(x)))
        except (np.linalg.LinAlgError, DomainError) as err:
            raise NoConvergence(f'solve_on_surface(): singular system at t={t:.6f}') from err
        cap = 1.0 + np.linalg.norm(x)
        if np.linalg.norm(step) > cap:
            step *= cap / np.linalg.norm(step)
        x = x + step
        if not np.all(np.isfinite(x)):
            break
        if np.linalg.norm(step) < tol * (1.0 + np.linalg.norm(x)):
            if _on_nodal_line(spec, x, t) and abs(surface.residual(x)) <= 1e-9 * max(1.0, abs(surface.c_value)):
                return _make_point(spec, x, t, method)
            break
    raise NoConvergence(f'solve_on_surface(): no node on the surface near {guess} at t={t:.6f}')


def nodal_seed(spec: WaveSpec, t: float, surface: IntegralSurface = None, box: float = 3.0,
               n: int = 7, max_tries: int = 40) -> NodalPoint:
    """
    Finds a starting node from a deterministic n^3 grid over [-box, box]^3.

    Grid points are tried in order of the linear distance estimate |Psi|/|grad Psi|.
    """
    axis = np.linspace(-box, box, n)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing='ij'), axis=-1).reshape(-1, 3)
    s = sample(spec, grid, t, envelope=False)
    slope = np.sqrt(np.sum(s.grad_re ** 2 + s.grad_im ** 2, axis=-1))
    estimate = np.sqrt(s.g) / np.maximum(slope, 1e-300)
    for i in np.argsort(estimate, kind='stable')[:max_tries]:
        try:
            point = nodal_find(spec, t, grid[i])
            if surface is not None:
                point = solve_on_surface(spec, surface, t, point.x)
        except BohmError:
            continue
        return point
    raise NotFound(f'nodal_seed(): no node found in [-{box}, {box}]^3 at t={t}')


def node_velocity(spec: WaveSpec, node: NodalPoint, dt_node: float = 1e-4,
                  surface: IntegralSurface = None) -> np.ndarray:
    """
    Velocity of a node by central differences, re-solving the node at t +/- dt_node.

    Without a surface the node is followed orthogonally to the nodal line; with one it stays on it.
    """
    ends = []
    for h in (dt_node, -dt_node):
        if surface is not None:
            ends.append(solve_on_surface(spec, surface, node.t + h, node.x).x)
        else:
            ends.append(nodal_find(spec, node.t + h, node.x).x)
    return (ends[0] - ends[1]) / (2.0 * dt_node)


def _plane_solve(spec: WaveSpec, t, guess, normal, anchor, max_iter: int = 30, tol: float = 1e-13):
    x = np.array(guess, dtype=float)
    for _ in range(max_iter):
        f, jac = _node_system(spec, x, t)
        try:
            step = np.linalg.solve(np.vstack([jac, normal]), -np.append(f, normal @ (x - anchor)))
        except np.linalg.LinAlgError as err:
            raise NoConvergence(f'F-plane is tangent to the nodal line at t={t:.6f}') from err
        x = x + step
        if not np.all(np.isfinite(x)):
            break
        if np.linalg.norm(step) < tol * (1.0 + np.linalg.norm(x)):
            return x
    raise NoConvergence(f'F-plane solve did not converge at t={t:.6f}')


def _rescan(spec, last_x, t_from, t1, dt, surface, cutoff, limit):
    # a node leaving through infinity comes back from the opposite direction
    candidates = [-last_x] + [last_x * np.array(flip) for flip in ((-1, 1, 1), (1, -1, 1), (1, 1, -1))]
    t = t_from
    for _ in range(limit):
        t += dt
        if t > t1:
            return None
        for guess in candidates:
            try:
                point = nodal_find(spec, t, guess, max_excursion=2.0 * cutoff)
                if surface is not None:
                    point = solve_on_surface(spec, surface, t, point.x)
            except BohmError:
                continue
            if np.linalg.norm(point.x) < cutoff:
                return point
    return None


def _march(spec, seed, t1, dt, method, predict, advance, surface, cutoff, dt_min, rescan_limit, counter):
    if not dt > 0:
        raise DomainError(f'tracking step must be positive, got {dt}')
    if not t1 > seed.t:
        raise DomainError(f'tracking runs forward in time: t1={t1} is not after {seed.t}')
    dt_min = dt * 1e-6 if dt_min is None else dt_min
    points = [seed.moved(method)]
    blowups = []
    continuous = True
    x, t, h = np.array(seed.x, dtype=float), float(seed.t), dt

    while t1 - t > 1e-12 * max(1.0, abs(t1)):
        step = min(h, t1 - t)
        t_new = t1 if step == t1 - t else t + step
        v = predict(x, t)
        x_pred = x + v * step
        try:
            x_new = advance(x, t, t_new, x_pred)
        except BohmError:
            x_new = None

        lost = (x_new is not None and np.linalg.norm(x_new) > cutoff) or (
            x_new is None and (np.linalg.norm(x_pred) > cutoff or (step / 2 < dt_min and np.linalg.norm(x) > 0.1 * cutoff)))
        if lost:
            logging.info(f'{method.value.lower()} tracking: node left |x| < {cutoff:g} at t={t:.6f}, rescanning')
            resumed = _rescan(spec, x, t, t1, dt, surface, cutoff, rescan_limit)
            if resumed is None:
                blowups.append(BlowupEvent(t, x.copy()))
                continuous = False
                break
            blowups.append(BlowupEvent(t, x.copy(), resumed.t))
            points.append(resumed.moved(method))
            x, t, h = resumed.x.copy(), resumed.t, dt
            continue

        gap = np.inf if x_new is None else np.linalg.norm(x_new - x_pred)
        if gap <= max(CONTINUITY_FACTOR * np.linalg.norm(v) * step, CONTINUITY_FLOOR * (1.0 + np.linalg.norm(x))):
            points.append(_make_point(spec, x_new, t_new, method))
            x, t = x_new, t_new
            h = min(dt, 2.0 * step)
        else:
            h = step / 2.0
            if h < dt_min:
                raise LostTrack(f'{method.value.lower()} tracking lost the node at t={t:.9f}')

    logging.info(
        f'{method.value.lower()} tracking: {len(points)} nodes up to t={t:.6f}, '
        f'{counter[0]} solves, {len(blowups)} blowups'
    )
    return NodalTrack(tuple(points), method, continuous, tuple(blowups), counter[0])


def track_fplane(spec: WaveSpec, seed: NodalPoint, t1: float, dt: float, surface: IntegralSurface = None,
                 cutoff: float = BLOWUP_CUTOFF, dt_min: float = None,
                 rescan_limit: int = RESCAN_LIMIT) -> NodalTrack:
    """
    Follows a node in time through the planes orthogonal to its nodal line.

    Each step predicts with the node velocity, then intersects the nodal line at t + dt with the
    plane through the current node whose normal averages the old and new tangents. Tangents come from
    parameterising the nodal line by one coordinate, z to begin with; once the other coordinates
    change faster than PARAM_SWITCH times that coordinate, the coordinate along which the line is
    steepest takes over. A surface, when given, pulls the result onto that integral surface by
    sliding along the nodal line.

    Parameters:
        spec (WaveSpec): The wavefunction.
        seed (NodalPoint): Starting node.
        t1 (float): End time, after seed.t.
        dt (float): Nominal step; halved while the continuity test fails.
        surface (IntegralSurface): Optional surface to stay on.
        cutoff (float): |x| beyond which the node counts as gone to infinity.

    Returns:
        NodalTrack: with method FPLANE, the plane normals and the parameterising axis of each step.

    Raises:
        LostTrack: If the step falls below dt_min without a continuous solution.
    """
    counter = [0]
    normals, axes = [], []
    axis = [2]

    def tangent_along(x, t, a):
        w = _param_tangent(spec, x, t, a)
        return _tangent(spec, x, t) if w is None else w / np.linalg.norm(w)

    def advance(x, t, t_new, x_pred):
        w = _param_tangent(spec, x, t, axis[0])
        if w is None or np.max(np.abs(w)) > PARAM_SWITCH:
            a = int(np.argmax(np.abs(_tangent(spec, x, t))))
            if a != axis[0]:
                logging.info(f'track_fplane(): nodal line parameterised by x[{a}] from t={t:.6f}')
                axis[0] = a
            w = _param_tangent(spec, x, t, a)
        t_old = w / np.linalg.norm(w)
        normal = t_old
        x_new = x_pred
        for _ in range(4):
            x_new = _plane_solve(spec, t_new, x_new, normal, x)
            counter[0] += 1
            t_next = tangent_along(x_new, t_new, axis[0])
            if t_next @ t_old < 0:
                t_next = -t_next
            bisector = (t_old + t_next) / np.linalg.norm(t_old + t_next)
            if np.linalg.norm(bisector - normal) < 1e-12:
                break
            normal = bisector
        if surface is not None:
            x_new = solve_on_surface(spec, surface, t_new, x_new).x
            counter[0] += 1
        normals.append(normal)
        axes.append(axis[0])
        return x_new

    track = _march(spec, seed, t1, dt, NodalMethod.FPLANE, lambda x, t: _free_velocity(spec, x, t), advance,
                   surface, cutoff, dt_min, rescan_limit, counter)
    return NodalTrack(track.points, track.method, track.continuous, track.blowups, track.solves,
                      np.array(normals).reshape(-1, 3), np.array(axes, dtype=int))


def _inner_solve(spec, t, axis, q, guess, max_iter: int = 30, tol: float = 1e-13):
    # the point of the nodal line with coordinate `axis` equal to q
    other = [i for i in range(3) if i != axis]
    x = np.array(guess, dtype=float)
    x[axis] = q
    for _ in range(max_iter):
        f, jac = _node_system(spec, x, t)
        try:
            step = np.linalg.solve(jac[:, other], -f)
        except np.linalg.LinAlgError as err:
            raise NewtonDiverged(f'nodal line is parallel to the plane x[{axis}]={q:.6f}') from err
        x[other] += step
        if not np.all(np.isfinite(x)):
            break
        if np.linalg.norm(step) < tol * (1.0 + np.linalg.norm(x)):
            return x
    raise NewtonDiverged(f'inner Newton solve diverged at t={t:.6f}')


def track_surface_newton(spec: WaveSpec, surface: IntegralSurface, seed: NodalPoint, t1: float, dt: float,
                         trust_radius: float = 0.1, cutoff: float = BLOWUP_CUTOFF, dt_min: float = None,
                         rescan_limit: int = RESCAN_LIMIT) -> NodalTrack:
    """
    Follows a node on an integral surface by Newton iteration on g(q, t) = C.

    The nodal line is parameterised by the coordinate q along which its tangent is largest; an
    inner 2x2 Newton solve gives the other two coordinates, the outer Newton adjusts q using the
    implicit derivative of the nodal line. Steps with node speed * dt above trust_radius emit a
    LargeVelocity warning.
    """
    counter = [0]
    warned = [False]

    def predict(x, t):
        return _surface_velocity(spec, surface, x, t)

    def advance(x, t, t_new, x_pred):
        speed = np.linalg.norm(predict(x, t))
        if speed * (t_new - t) > trust_radius and not warned[0]:
            message = f'node speed {speed:.3e} at t={t:.6f} exceeds trust radius {trust_radius:g} per step'
            logging.warning(f'track_surface_newton(): {message}')
            warnings.warn(message, LargeVelocity)
            warned[0] = True
        axis = int(np.argmax(np.abs(_tangent(spec, x, t))))
        other = [i for i in range(3) if i != axis]
        q = x_pred[axis]
        guess = x_pred
        for _ in range(30):
            point = _inner_solve(spec, t_new, axis, q, guess)
            counter[0] += 1
            _, jac = _node_system(spec, point, t_new)
            slope = np.zeros(3)
            slope[axis] = 1.0
            try:
                slope[other] = np.linalg.solve(jac[:, other], -jac[:, axis])
            except np.linalg.LinAlgError as err:
                raise NewtonDiverged(f'track_surface_newton(): singular nodal line at t={t_new:.6f}') from err
            dg = surface.gradient(point) @ slope
            if dg == 0:
                raise NewtonDiverged(f'track_surface_newton(): nodal line tangent to the surface at t={t_new:.6f}')
            dq = -surface.residual(point) / dg
            q += dq
            guess = point
            if abs(dq) < 1e-13 * (1.0 + abs(q)):
                counter[0] += 1
                return _inner_solve(spec, t_new, axis, q, point)
        raise NewtonDiverged(f'track_surface_newton(): outer Newton diverged at t={t_new:.6f}')

    return _march(spec, seed, t1, dt, NodalMethod.SURF_NEWTON, predict, advance, surface, cutoff, dt_min,
                  rescan_limit, counter)


def track_surface_ode(spec: WaveSpec, surface: IntegralSurface, seed: NodalPoint, t1: float,
                      cfg: IntegratorConfig = None, cutoff: float = BLOWUP_CUTOFF,
                      rescan_dt: float = 1e-2, rescan_limit: int = RESCAN_LIMIT) -> NodalTrack:
    """
    Follows a node on an integral surface by integrating the differentiated node and surface
    conditions, J dx/dt = -(dPsi_R/dt, dPsi_I/dt, 0) with J = [grad Psi_R; grad Psi_I; grad f],
    with RKF45. Every accepted step is pulled back onto node and surface by one Newton solve.
    """
    if not t1 > seed.t:
        raise DomainError(f'tracking runs forward in time: t1={t1} is not after {seed.t}')
    cfg = cfg or IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10, h_init=1e-3, h_min=1e-12, h_max=5e-2)
    method = NodalMethod.SURF_ODE
    points = [seed.moved(method)]
    blowups = []
    solves = 0
    continuous = True

    def rhs(t, x):
        if not np.all(np.isfinite(x)):
            raise NodeProximity(x, t, 0.0)
        return _surface_velocity(spec, surface, x, t)

    def callback(t, x):
        nonlocal solves
        if np.linalg.norm(x) > cutoff:
            return False
        try:
            point = solve_on_surface(spec, surface, t, x, method=method)
        except BohmError as err:
            raise LostTrack(f'track_surface_ode(): node lost at t={t:.9f}') from err
        solves += 1
        points.append(point)
        return point.x

    start = points[0]
    while True:
        sol = rkf45(rhs, start.x, start.t, t1, cfg, callback=callback)
        if not sol.stopped:
            break
        last = points[-1]
        logging.info(f'track_surface_ode(): node left |x| < {cutoff:g} at t={last.t:.6f}, rescanning')
        resumed = _rescan(spec, last.x, last.t, t1, rescan_dt, surface, cutoff, rescan_limit)
        if resumed is None:
            blowups.append(BlowupEvent(last.t, last.x.copy()))
            continuous = False
            break
        blowups.append(BlowupEvent(last.t, last.x.copy(), resumed.t))
        start = resumed.moved(method)
        points.append(start)

    logging.info(f'track_surface_ode(): {len(points)} nodes up to t={points[-1].t:.6f}, {solves} solves, '
                 f'{len(blowups)} blowups')
    return NodalTrack(tuple(points), method, continuous, tuple(blowups), solves)


def nodal_crossings(spec: WaveSpec, track: NodalTrack, level: float, axis: int = 2,
                    surface: IntegralSurface = None) -> list:
    """
    Nodes where the track crosses x[axis] = level, with the crossing time refined by brentq.

    Intervals spanning a blowup are skipped.
    """
    times, xs = track.times, track.positions
    jumps = {e.t_lost for e in track.blowups}
    crossings = []
    for i in range(len(times) - 1):
        lo, hi = xs[i, axis] - level, xs[i + 1, axis] - level
        if lo * hi > 0 or times[i] in jumps or lo == hi:
            continue
        if hi == 0 and i + 2 < len(times):
            continue
        t_a, t_b = times[i], times[i + 1]

        def node_at(t):
            w = (t - t_a) / (t_b - t_a)
            guess = (1.0 - w) * xs[i] + w * xs[i + 1]
            if surface is not None:
                return solve_on_surface(spec, surface, t, guess)
            return nodal_find(spec, t, guess)

        if lo == 0:
            t_c = t_a
        else:
            t_c = optimize.brentq(lambda t: node_at(t).x[axis] - level, t_a, t_b, xtol=1e-13, rtol=4e-16)
        crossings.append(node_at(t_c))
    return crossings


class _SphereChart:
    def __init__(self, surface: IntegralSurface):
        self.radius = math.sqrt(surface.c_value)

    def coords(self, x):
        theta, phi = sphere_coords(x)
        return np.array([theta, phi])

    def point(self, q):
        theta, phi = q
        return self.radius * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                                       math.cos(theta)])

    def rates(self, x, v):
        rho2 = x[0] ** 2 + x[1] ** 2
        r2 = x @ x
        phi_dot = (x[0] * v[1] - x[1] * v[0]) / rho2
        theta_dot = -(v[2] - x[2] * (x @ v) / r2) / math.sqrt(rho2)
        return np.array([theta_dot, phi_dot])

    def offset(self, q, radius, angle):
        return q + np.array([radius * math.cos(angle) / self.radius,
                             radius * math.sin(angle) / (self.radius * max(math.sin(q[0]), 1e-3))])

    def column_scale(self, q):
        return np.ones(2)


class _PearChart:
    # Newton runs over (z, phi); rates and eigenvalues are reported for (s, phi)
    def __init__(self, surface: IntegralSurface):
        self.c = surface.c_value
        self.omega3 = surface.omega3
        self.phi_fn, _, _ = phi_and_extrema(surface.omega3)

    def _rho(self, z):
        return math.sqrt(max(self.c - float(self.phi_fn(z)), 0.0))

    def _ds_dz(self, z):
        slope = z - 1.0 / (2.0 * self.omega3 * z)
        gap = max(self.c - float(self.phi_fn(z)), 1e-300)
        return math.sqrt(1.0 + slope * slope / (4.0 * gap))

    def coords(self, x):
        return np.array([x[2], math.atan2(x[1], x[0])])

    def point(self, q):
        z, phi = q
        rho = self._rho(z)
        return np.array([rho * math.cos(phi), rho * math.sin(phi), z])

    def rates(self, x, v):
        rho2 = x[0] ** 2 + x[1] ** 2
        return np.array([self._ds_dz(x[2]) * v[2], (x[0] * v[1] - x[1] * v[0]) / rho2])

    def offset(self, q, radius, angle):
        return q + np.array([radius * math.cos(angle) / self._ds_dz(q[0]),
                             radius * math.sin(angle) / max(self._rho(q[0]), 1e-3)])

    def column_scale(self, q):
        return np.array([1.0 / self._ds_dz(q[0]), 1.0])


def _chart_for(surface: IntegralSurface):
    if surface.family == Family.SPHERE:
        return _SphereChart(surface)
    if surface.family == Family.PEAR:
        return _PearChart(surface)
    raise UnsupportedSurface(f'xpoint_find(): no surface chart for {surface.family.value} surfaces')


def _chart_jacobian(residual, q, h: float = 1e-6):
    jac = np.empty((2, 2))
    for j in range(2):
        step = np.zeros(2)
        step[j] = h
        jac[:, j] = (residual(q + step) - residual(q - step)) / (2.0 * h)
    return jac


def xpoint_find(spec: WaveSpec, surface: IntegralSurface, node: NodalPoint, seeds: int = 8,
                radii=(0.1, 0.3), max_iter: int = 40, tol: float = 1e-10, max_distance: float = 1.5,
                p_floor: float = P_FLOOR, dt_node: float = 1e-4) -> XPoint:
    """
    Locates the X-point paired with a node on a sphere or pear surface.

    In chart coordinates ((theta, phi) on spheres, (s, phi) on pears) the flow is taken relative
    to the node's own chart rates. Newton iterations start from a ring of seeds around the node;
    the converged fixed points are classified by the eigenvalues of the 2x2 chart Jacobian and the
    saddle nearest the node is returned.

    Raises:
        UnsupportedSurface: For open or generic surfaces.
        NotFound: If no saddle is among the fixed points found.
        Degenerate: If the only fixed points found have |l1 l2| < 1e-10.
    """
    chart = _chart_for(surface)
    node_x = np.asarray(node.x, dtype=float)
    try:
        node_rates = chart.rates(node_x, node_velocity(spec, node, dt_node=dt_node, surface=surface))
    except BohmError as err:
        raise NotFound(f'xpoint_find(): node velocity unavailable at t={node.t:.6f}: {err}') from err
    q_node = chart.coords(node_x)

    def residual(q):
        x = chart.point(q)
        return chart.rates(x, velocity(spec, x, node.t)) - node_rates

    saddles, degenerate = [], False
    for radius in radii:
        for k in range(seeds):
            q = chart.offset(q_node, radius, 2.0 * math.pi * k / seeds)
            try:
                for _ in range(max_iter):
                    w = residual(q)
                    if np.linalg.norm(w) < tol:
                        break
                    step = np.linalg.solve(_chart_jacobian(residual, q), -w)
                    if np.linalg.norm(step) > 0.05:
                        step *= 0.05 / np.linalg.norm(step)
                    q = q + step
                else:
                    continue
            except (BohmError, np.linalg.LinAlgError, ValueError):
                continue
            x = chart.point(q)
            distance = np.linalg.norm(x - node_x)
            if distance < p_floor or distance > max_distance:
                continue
            eig = np.linalg.eigvals(_chart_jacobian(residual, q) * chart.column_scale(q))
            if abs(eig[0] * eig[1]) < 1e-10:
                degenerate = True
                continue
            if np.max(np.abs(eig.imag)) <= 1e-9 * np.max(np.abs(eig)) and eig[0].real * eig[1].real < 0:
                saddles.append((distance, x, q, tuple(float(e) for e in sorted(eig.real)), float(np.linalg.norm(w))))
        if saddles:
            break

    if not saddles:
        if degenerate:
            raise Degenerate(f'xpoint_find(): fixed points near the node at t={node.t:.6f} are degenerate')
        raise NotFound(f'xpoint_find(): no saddle near the node at t={node.t:.6f}')
    _, x, q, eigvals, res = min(saddles, key=lambda item: item[0])
    logging.info(f'xpoint_find(): X-point at {np.round(x, 6)} for t={node.t:.6f}, eigenvalues {eigvals}')
    return XPoint(x, node.t, eigvals, node, tuple(float(c) for c in q), res)
