"""
Adaptive Runge-Kutta-Fehlberg 4(5) integration of Bohmian trajectories.

`rkf45` is a generic core over any right-hand side f(t, y); `integrate` wraps it around the
Bohmian velocity field and records the minimum G seen along the way.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, model_validator

from .errors import DomainError, MaxSteps, NodeProximity, StepUnderflow
from .flow import G_FLOOR, velocity_and_g
from .wavefunction import WaveSpec

# Fehlberg tableau; the 5th-order solution is propagated.
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_E = np.array([1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55])

MAX_CONSECUTIVE_REJECTS = 20


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    abs_tol: PositiveFloat = 1e-7
    rel_tol: PositiveFloat = 1e-6
    h_init: PositiveFloat = 1e-3
    h_min: PositiveFloat = 1e-12
    h_max: PositiveFloat = 1e-1
    max_steps: PositiveInt = 10 ** 8
    g_floor: PositiveFloat = G_FLOOR

    @model_validator(mode='after')
    def _check_steps(self):
        if not self.h_min <= self.h_init <= self.h_max:
            raise ValueError(f'need h_min <= h_init <= h_max, got {self.h_min}, {self.h_init}, {self.h_max}')
        return self


@dataclass
class RKSolution:
    times: np.ndarray
    states: np.ndarray
    steps_accepted: int
    steps_rejected: int
    stopped: bool = False
    node_rejects: int = 0


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    steps_accepted: int
    steps_rejected: int
    min_g_seen: float
    surface_drift: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            't': self.times,
            'x': self.points[:, 0],
            'y': self.points[:, 1],
            'z': self.points[:, 2],
        })
        if self.surface_drift is not None:
            frame['drift'] = self.surface_drift
        return frame


def _fehlberg_step(rhs, t, y, k1, h):
    ks = [k1]
    for stage in range(1, 6):
        yi = y + h * sum(a * k for a, k in zip(_A[stage], ks))
        ks.append(np.asarray(rhs(t + _C[stage] * h, yi), dtype=float))
    ks = np.array(ks)
    return y + h * (_B5 @ ks), h * (_E @ ks)


def _hermite(t0, y0, f0, t1, y1, f1, tau):
    h = t1 - t0
    s = (tau - t0) / h
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1)


def rkf45(rhs, y0, t0: float, t1: float, cfg: IntegratorConfig = None, callback=None,
          sample_times=None) -> RKSolution:
    """
    Integrates y' = rhs(t, y) from t0 to t1 (t1 < t0 runs backwards).

    Parameters:
        rhs (callable): f(t, y) returning an array shaped like y. A NodeProximity raised at an
            intermediate stage rejects the step; raised at the initial point it propagates.
        y0 (array-like): Initial state.
        t0 (float): Start time.
        t1 (float): End time.
        cfg (IntegratorConfig): Tolerances and step limits.
        callback (callable): Called as callback(t, y) after every accepted step. Returning an
            array replaces the state, returning False ends the integration, None continues.
        sample_times (array-like): When given, only these times are recorded (cubic Hermite dense
            output, interpolation error O(h^4) per step); otherwise every accepted step is.

    Returns:
        RKSolution: recorded times and states plus step counts.

    Raises:
        StepUnderflow: If the step falls below h_min.
        MaxSteps: If more than max_steps steps are attempted.
    """
    cfg = cfg or IntegratorConfig()
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t1 >= t0 else -1.0
    f = np.asarray(rhs(t, y), dtype=float)

    if sample_times is None:
        samples = None
        times, states = [t], [y.copy()]
    else:
        samples = np.asarray(sample_times, dtype=float)
        if samples.size and (np.any(direction * np.diff(samples) <= 0)
                             or direction * (samples[0] - t0) < 0 or direction * (t1 - samples[-1]) < 0):
            raise DomainError('rkf45(): sample times must be strictly monotone and lie within [t0, t1]')
        times, states = [], []
        k = 0
        while k < samples.size and samples[k] == t:
            times.append(t)
            states.append(y.copy())
            k += 1

    h = min(cfg.h_init, cfg.h_max, abs(t1 - t0)) if t1 != t0 else 0.0
    accepted = rejected = consecutive = node_rejects = 0
    stopped = False
    while direction * (t1 - t) > 0:
        if accepted + rejected >= cfg.max_steps:
            raise MaxSteps(f'rkf45(): {cfg.max_steps} steps used before reaching t={t1}')
        remaining = abs(t1 - t)
        step = min(h, remaining)
        t_new = t1 if step == remaining else t + direction * step
        try:
            y_new, err = _fehlberg_step(rhs, t, y, f, t_new - t)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            ratio = float(np.max(np.abs(err) / scale))
            f_new = np.asarray(rhs(t_new, y_new), dtype=float) if ratio <= 1.0 else None
        except NodeProximity:
            node_rejects += 1
            ratio = math.inf

        if ratio <= 1.0:
            if samples is not None:
                while k < samples.size and direction * (samples[k] - t_new) <= 0:
                    times.append(samples[k])
                    states.append(y_new.copy() if samples[k] == t_new else _hermite(t, y, f, t_new, y_new, f_new, samples[k]))
                    k += 1
            t, y, f = t_new, y_new, f_new
            accepted += 1
            consecutive = 0
            if callback is not None:
                out = callback(t, y)
                if out is False:
                    stopped = True
                elif out is not None:
                    y = np.array(out, dtype=float)
                    f = np.asarray(rhs(t, y), dtype=float)
            if samples is None:
                times.append(t)
                states.append(y.copy())
            if stopped:
                break
            grow = 5.0 if ratio == 0.0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
            h = min(cfg.h_max, step * grow)
        else:
            rejected += 1
            consecutive += 1
            if consecutive >= MAX_CONSECUTIVE_REJECTS or not math.isfinite(ratio):
                h = step / 2.0
            else:
                h = step * max(0.2, 0.9 * ratio ** -0.2)
            if h < cfg.h_min:
                raise StepUnderflow(t, y.copy(), math.nan)

    states = np.array(states) if states else np.empty((0,) + y.shape)
    return RKSolution(np.array(times), states, accepted, rejected, stopped, node_rejects)


def sample_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """
    Uniform sample times from t0 towards t1 with spacing dt, t1 always included.

    Example:
        >>> sample_grid(0.0, 1.0, 0.4)
        array([0. , 0.4, 0.8, 1. ])
    """
    if not dt > 0:
        raise DomainError(f'sample_grid(): dt must be positive, got {dt}')
    direction = 1.0 if t1 >= t0 else -1.0
    n = int(math.floor(abs(t1 - t0) / dt + 1e-9))
    grid = t0 + direction * dt * np.arange(n + 1)
    if abs(grid[-1] - t1) > 1e-9 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def integrate(spec: WaveSpec, x0, t0: float, t1: float, cfg: IntegratorConfig = None,
              sample_dt: float = None, sample_times=None, surface=None) -> Trajectory:
    """
    Integrates one Bohmian trajectory with RKF45.

    Parameters:
        spec (WaveSpec): The guiding wavefunction.
        x0 (array-like): Initial position.
        t0 (float): Start time.
        t1 (float): End time, different from t0; t1 < t0 integrates backwards.
        cfg (IntegratorConfig): Tolerances and step limits.
        sample_dt (float): Uniform output spacing; default records every accepted step.
        sample_times (array-like): Explicit output times (overrides sample_dt).
        surface (IntegralSurface): When given, the drift f(x(t)) - f(x0) is recorded.

    Returns:
        Trajectory: times, points, step counts, min G and optional surface drift.

    Example:
        >>> spec = WaveSpec.from_numbers([0.98 ** 0.5, 0.1, 0.1], [(1, 0, 0), (0, 1, 0), (0, 0, 1)], (1.0, 2 ** 0.5, 3 ** 0.5))
        >>> traj = integrate(spec, (1.0, 0.0, 1.0), 0.0, 200.0, sample_dt=0.05)
    """
    if t1 == t0:
        raise DomainError('integrate(): t1 must differ from t0')
    cfg = cfg or IntegratorConfig()
    min_g = [math.inf]

    def rhs(t, x):
        try:
            v, g = velocity_and_g(spec, x, t, cfg.g_floor)
        except NodeProximity as err:
            min_g[0] = min(min_g[0], err.g)
            raise
        min_g[0] = min(min_g[0], g)
        return v

    if sample_times is None and sample_dt is not None:
        sample_times = sample_grid(t0, t1, sample_dt)

    started = time.perf_counter()
    try:
        sol = rkf45(rhs, x0, t0, t1, cfg, sample_times=sample_times)
    except StepUnderflow as err:
        logging.error(f'integrate(): step underflow at t={err.t:.9f}, min G {min_g[0]:.3e}')
        raise StepUnderflow(err.t, err.state, min_g[0]) from None

    traj = Trajectory(sol.times, sol.states, sol.steps_accepted, sol.steps_rejected, min_g[0])
    # underflow and max_steps abort the run, so a returned trajectory never carries them
    traj.meta['flags'] = {
        'step_underflow': False,
        'max_steps': False,
        'node_proximity': sol.node_rejects > 0,
        'node_proximity_rejects': sol.node_rejects,
        'stopped': sol.stopped,
    }
    if surface is not None:
        traj.surface_drift = surface.value(traj.points) - surface.value(np.asarray(x0, dtype=float))
    logging.info(
        f'integrate(): t {t0:g} -> {t1:g}, {sol.steps_accepted} steps accepted, '
        f'{sol.steps_rejected} rejected, min G {min_g[0]:.3e}, {time.perf_counter() - started:.2f}s'
    )
    return traj


def retrace_error(spec: WaveSpec, x0, t0: float, t1: float, cfg: IntegratorConfig = None) -> float:
    """
    Integrates t0 -> t1 and back, returning the distance between the recovered and original x0.
    """
    if t1 == t0:
        return 0.0
    x0 = np.asarray(x0, dtype=float)
    forward = integrate(spec, x0, t0, t1, cfg, sample_times=[t1])
    backward = integrate(spec, forward.points[-1], t1, t0, cfg, sample_times=[t0])
    return float(np.linalg.norm(backward.points[-1] - x0))


def integrate_batch(spec: WaveSpec, initials, t0: float, t1: float, cfg: IntegratorConfig = None,
                    threads: int = 1, **kwargs) -> list:
    """
    Integrates several initial conditions, in parallel when threads > 1.

    Results come back in the order of `initials`, each identical to a sequential `integrate` call.
    """
    initials = [np.asarray(x, dtype=float) for x in initials]
    if threads <= 1 or len(initials) <= 1:
        return [integrate(spec, x, t0, t1, cfg, **kwargs) for x in initials]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda x: integrate(spec, x, t0, t1, cfg, **kwargs), initials))
