import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings

from .config import RunConfig
from .diagnostics import (Chart, direction_concentration, label_orbit, node_approach, occupancy,
                          chart_coords, special_directions)
from .errors import BohmError, ConfigError, UnsupportedSurface
from .exports import config_hash, read_trajectory_csv, write_frame, write_json, write_manifest, write_trajectory
from .integrator import integrate, integrate_batch, sample_grid
from .nodal import (NodalTrack, closed_form_track, nodal_crossings, nodal_find, nodal_seed, solve_on_surface,
                    track_fplane, track_surface_newton, track_surface_ode, xpoint_find)
from .perturbation import deviation, formal_integrals, iterate_order
from .surfaces import Family, IntegralSurface, classify_integrability, surface_family


@dataclass
class RunResult:
    task: str
    out_dir: Path
    result: dict
    artifacts: list = field(default_factory=list)
    duration: float = 0.0


def output_dir(cfg: RunConfig) -> Path:
    """
    Resolves where a run writes: [output] dir when set, else BOHM_OUT_DIR/<preset or task>.

    Raises:
        ConfigError: If the directory cannot be created.
    """
    base = Path(cfg.output.dir) if cfg.output.dir else Path(settings.BOHM_OUT_DIR) / (cfg.preset or cfg.task)
    try:
        base.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f'cannot create {base}: {e}', field='output.dir') from None
    return base


def thread_count(cfg: RunConfig) -> int:
    return cfg.threads or settings.BOHM_THREADS


def surface_for(cfg: RunConfig, spec, x0=None) -> IntegralSurface:
    """
    The integral surface a task works on.

    Parameters:
        cfg (RunConfig): radius (spheres) or surface_c (pear/open) pick the surface explicitly.
        spec (WaveSpec): Its modes decide the family.
        x0 (array-like): Otherwise the surface through this point is used.

    Returns:
        IntegralSurface, or None for wavefunctions without a known integral.
    """
    family = surface_family(spec)
    if family == Family.GENERIC:
        return None
    omega3 = spec.omegas[2]
    s = cfg.scenario
    if family == Family.SPHERE and s.radius is not None and x0 is None:
        return IntegralSurface.sphere(s.radius)
    if s.surface_c is not None and x0 is None:
        return IntegralSurface(family, s.surface_c, omega3)
    if x0 is None:
        field_name = 'scenario.radius' if family == Family.SPHERE else 'scenario.surface_c'
        raise ConfigError(f'needed to pick the {family.value} surface', field=field_name)
    return IntegralSurface.through(family, x0, omega3)


def _default_chart(cfg: RunConfig, surface: IntegralSurface):
    if cfg.scenario.chart is not None:
        return Chart(cfg.scenario.chart)
    if surface is None or surface.family not in (Family.SPHERE, Family.PEAR):
        return None
    return Chart.PEAR_S_PHI if surface.family == Family.PEAR else Chart.SPHERE_THETA_PHI


def _name(cfg: RunConfig, name: str) -> str:
    return f'{cfg.output.prefix}{name}'


def simulate_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """
    Integrates every initial condition and records the drift from its integral surface.

    Returns:
        tuple: (report dict, list of artifact paths).

    Example:
        >>> simulate_handler(preset('fig8'), preset('fig8').spec(), Path('runs/fig8'))[0]['orbits'][0]['surface_drift_max'] < 1e-5
        True
    """
    s = cfg.scenario
    initials = s.initial_points()
    trajectories = integrate_batch(spec, initials, s.t0, s.t1, cfg.integrator, threads=thread_count(cfg),
                                   sample_dt=s.sample_dt)
    orbits, artifacts = [], []
    for k, (x0, traj) in enumerate(zip(initials, trajectories)):
        surface = surface_for(cfg, spec, x0) if surface_family(spec) != Family.GENERIC else None
        if surface is not None:
            traj.surface_drift = np.asarray(surface.value(traj.points)) - surface.value(x0)
        artifacts.append(write_trajectory(out / _name(cfg, f'trajectory_{k}.csv'), traj, spec, cfg.canonical(),
                                           {'x0': x0}))
        orbits.append({
            'x0': x0,
            'surface': surface.family.value if surface else None,
            'surface_c': surface.c_value if surface else None,
            'surface_drift_max': float(np.max(np.abs(traj.surface_drift))) if surface else None,
            'steps_accepted': traj.steps_accepted,
            'steps_rejected': traj.steps_rejected,
            'min_g_seen': traj.min_g_seen,
        })
    report = {'task': 'simulate', 't0': s.t0, 't1': s.t1, 'orbits': orbits}
    artifacts.append(write_json(out / _name(cfg, 'report.json'), report))
    return report, artifacts


def retrace_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """Integrates t0 -> t1 and back from the end point; the retrace error is |x_back(t0) - x0|."""
    s = cfg.scenario
    orbits, artifacts = [], []
    for k, x0 in enumerate(s.initial_points()):
        forward = integrate(spec, x0, s.t0, s.t1, cfg.integrator, sample_dt=s.sample_dt)
        backward = integrate(spec, forward.points[-1], s.t1, s.t0, cfg.integrator, sample_dt=s.sample_dt)
        error = float(np.linalg.norm(backward.points[-1] - x0))
        logging.info(f'retrace_handler(): orbit {k} retrace error {error:.3e}')
        artifacts.append(write_trajectory(out / _name(cfg, f'forward_{k}.csv'), forward, spec, cfg.canonical()))
        artifacts.append(write_trajectory(out / _name(cfg, f'backward_{k}.csv'), backward, spec, cfg.canonical()))
        orbits.append({'x0': x0, 'x1': forward.points[-1], 'x0_recovered': backward.points[-1],
                       'retrace_error': error})
    report = {'task': 'retrace', 't0': s.t0, 't1': s.t1, 'orbits': orbits}
    artifacts.append(write_json(out / _name(cfg, 'report.json'), report))
    return report, artifacts


def classify_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    result = classify_integrability(spec).to_dict()
    result['family'] = surface_family(spec).value
    result['modes'] = [list(q) for q in spec.quanta]
    return result, [write_json(out / _name(cfg, 'classification.json'), result)]


def _seed_node(cfg: RunConfig, spec, t: float, surface: IntegralSurface):
    guess = cfg.scenario.node_seed
    if guess is None:
        return nodal_seed(spec, t, surface)
    if surface is not None:
        return solve_on_surface(spec, surface, t, guess)
    return nodal_find(spec, t, guess)


def track_nodes(cfg: RunConfig, spec, surface: IntegralSurface, t0: float, t1: float,
                method: str = None) -> NodalTrack:
    """Runs the configured nodal tracker (or `method`) over [t0, t1]."""
    s = cfg.scenario
    method = method or s.nodal_method
    if method == 'closed_form':
        if surface is None or surface.family != Family.SPHERE:
            raise ConfigError('closed_form tracking needs a sphere radius', field='scenario.radius')
        return closed_form_track(spec, math.sqrt(surface.c_value), t0, t1, s.nodal_dt)
    seed = _seed_node(cfg, spec, t0, surface)
    if method == 'fplane':
        return track_fplane(spec, seed, t1, s.nodal_dt, surface=surface)
    if surface is None:
        raise ConfigError(f'{method} tracking needs an integral surface', field='scenario.nodal_method')
    if method == 'surface_newton':
        return track_surface_newton(spec, surface, seed, t1, s.nodal_dt)
    return track_surface_ode(spec, surface, seed, t1)


def nodal_track_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """
    Follows the nodal point over [t0, t1] and reports its z = 0 crossings and chart occupancy.
    """
    s = cfg.scenario
    surface = surface_for(cfg, spec) if surface_family(spec) != Family.GENERIC else None
    track = track_nodes(cfg, spec, surface, s.t0, s.t1)
    artifacts = [write_frame(out / _name(cfg, 'nodal_track.csv'), track.to_frame())]
    report = {
        'task': 'nodal-track',
        'method': track.method.value,
        'surface': surface.family.value if surface else None,
        'surface_c': surface.c_value if surface else None,
        'points': len(track),
        'continuous': track.continuous,
        'solves': track.solves,
        'max_residual': float(np.max(track.residuals)),
        'blowups': [{'t_lost': e.t_lost, 'x_lost': e.x_lost, 't_resumed': e.t_resumed} for e in track.blowups],
    }
    level = 0.0
    if surface is not None and surface.family == Family.PEAR:
        level = 1.0 / math.sqrt(2.0 * surface.omega3)
    crossings = nodal_crossings(spec, track, level, surface=surface)
    report['crossings'] = {'level': level, 'count': len(crossings)}
    if crossings:
        cross = pd.DataFrame({'t': [p.t for p in crossings], 'x': [p.x[0] for p in crossings],
                              'y': [p.x[1] for p in crossings], 'z': [p.x[2] for p in crossings],
                              'phi': [math.atan2(p.x[1], p.x[0]) for p in crossings]})
        artifacts.append(write_frame(out / _name(cfg, 'crossings.csv'), cross))
    chart = _default_chart(cfg, surface)
    if chart is not None:
        occ = occupancy(track, chart, s.bins, surface if chart == Chart.PEAR_S_PHI else None)
        artifacts.append(write_frame(out / _name(cfg, 'occupancy.csv'),
                                     pd.DataFrame(list(occ.rows()), columns=['bin_u', 'bin_v', 'count'])))
        report['visited_fraction'] = occ.visited_fraction
        if surface.family == Family.SPHERE:
            try:
                report['direction_concentration'] = direction_concentration(track, special_directions(spec))
            except BohmError as e:
                logging.warning(f'nodal_track_handler(): {e}')
    artifacts.append(write_json(out / _name(cfg, 'report.json'), report))
    return report, artifacts


def xpoint_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """
    X-points paired with the node at t0, or at every sample_dt up to t1 when both are set.
    """
    s = cfg.scenario
    surface = surface_for(cfg, spec) if surface_family(spec) != Family.GENERIC else None
    if surface is None or surface.family not in (Family.SPHERE, Family.PEAR):
        raise UnsupportedSurface('xpoint_handler(): X-points are located on sphere or pear surfaces only')
    times = [s.t0] if s.t1 is None or s.sample_dt is None else sample_grid(s.t0, s.t1, s.sample_dt)
    rows, nodes = [], []
    node = _seed_node(cfg, spec, times[0], surface)
    for t in times:
        if t != node.t:
            node = solve_on_surface(spec, surface, t, node.x)
        xp = xpoint_find(spec, surface, node)
        rows.append({'t': t, 'x': xp.x[0], 'y': xp.x[1], 'z': xp.x[2],
                     'lambda1': xp.eigvals[0], 'lambda2': xp.eigvals[1]})
        nodes.append({'t': t, 'node': node.x, 'xpoint': xp.x, 'residual': xp.residual})
    frame = pd.DataFrame(rows, columns=['t', 'x', 'y', 'z', 'lambda1', 'lambda2'])
    # the CSV keeps the X-point columns; the paired node and the solve residual go to the report
    report = {'task': 'xpoint', 'surface': surface.family.value, 'surface_c': surface.c_value,
              'xpoints': len(rows), 'first': rows[0], 'points': nodes}
    return report, [write_frame(out / _name(cfg, 'xpoints.csv'), frame),
                    write_json(out / _name(cfg, 'report.json'), report)]


def _mean_deviation(dev: pd.DataFrame) -> dict:
    return {col: float(dev[col].mean()) for col in ('sigma_x', 'sigma_y', 'sigma_z')}


def perturb_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """
    Formal series through the configured order, its formal integrals and the deviation from
    the numerically integrated orbit. Order 2 runs also report the order-1 deviation.
    """
    s = cfg.scenario
    base = s.initial_points()[0]
    series = iterate_order(spec, base, s.order, s.t0)
    dt = s.sample_dt or 0.05
    traj = integrate(spec, base, s.t0, s.t1, cfg.integrator, sample_dt=dt)
    dev = deviation(series, traj, dt)
    integrals = formal_integrals(series)
    report = {
        'task': 'perturb',
        'order': s.order,
        'frequencies': sorted(list(h) for h in series.frequencies()),
        'mean_deviation': _mean_deviation(dev),
        'integrals': [fi.to_dict() for fi in integrals],
    }
    if s.order == 2:
        report['mean_deviation_order1'] = _mean_deviation(deviation(iterate_order(spec, base, 1, s.t0), traj, dt))
    plane = integrals[-1]
    if plane.normal is not None:
        report['surface_residual_max'] = float(max(abs(plane.residual(p)) for p in traj.points))
    artifacts = [
        write_json(out / _name(cfg, 'series.json'), series.to_dict()),
        write_frame(out / _name(cfg, 'deviation.csv'), dev),
        write_trajectory(out / _name(cfg, 'trajectory.csv'), traj, spec, cfg.canonical()),
        write_json(out / _name(cfg, 'report.json'), report),
    ]
    return report, artifacts


def project_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """Converts a trajectory CSV to chart coordinates (phi, theta) or (phi, s)."""
    times, points = read_trajectory_csv(cfg.scenario.input_csv)
    surface = surface_for(cfg, spec, points[0]) if surface_family(spec) != Family.GENERIC else None
    chart = _default_chart(cfg, surface)
    if chart is None:
        raise UnsupportedSurface('project_handler(): no chart for this surface family')
    u, v, _ = chart_coords(points, chart, surface if chart == Chart.PEAR_S_PHI else None, tol=1e-4)
    v_name = 'theta' if chart == Chart.SPHERE_THETA_PHI else 's'
    frame = pd.DataFrame({'t': times, 'phi': u, v_name: v})
    report = {'task': 'project', 'chart': chart.value, 'samples': len(frame)}
    return report, [write_frame(out / _name(cfg, 'projected.csv'), frame),
                    write_json(out / _name(cfg, 'report.json'), report)]


def _orbit_report(cfg: RunConfig, spec, k: int, x0, traj, out: Path):
    s = cfg.scenario
    surface = surface_for(cfg, spec, x0)
    t_lo, t_hi = min(s.t0, s.t1), max(s.t0, s.t1)
    method = s.nodal_method
    if method == 'closed_form' and surface.family != Family.SPHERE:
        logging.info(f'report_handler(): no closed form on a {surface.family.value} surface, tracking with fplane')
        method = 'fplane'
    track = track_nodes(cfg, spec, surface, t_lo, t_hi, method)
    if surface.family == Family.SPHERE:
        # both antipodal nodes lie on the sphere; keep the one the orbit comes closer to
        mirror = track.mirrored()
        if node_approach(traj, mirror).min_distance < node_approach(traj, track).min_distance:
            track = mirror
    retrace = integrate(spec, traj.points[-1], s.t1, s.t0, cfg.integrator, sample_times=[s.t0])
    error = float(np.linalg.norm(retrace.points[-1] - x0))
    result = label_orbit(traj, surface, track, error, chart=_default_chart(cfg, surface), bins=s.bins)
    write_frame(out / _name(cfg, f'nodal_track_{k}.csv'), track.to_frame())
    logging.info(f'report_handler(): orbit {k} labelled {result.label.value} ({track.method.value} nodes)')
    return result, surface, track


def report_handler(cfg: RunConfig, spec, out: Path) -> tuple:
    """
    Integrates each orbit, follows the nodal point over the same span and labels the orbit from
    its surface drift, node approach, retrace error and chart spread.
    """
    s = cfg.scenario
    if surface_family(spec) == Family.GENERIC:
        raise UnsupportedSurface('report_handler(): orbit reports need a sphere, pear or open surface')
    initials = s.initial_points()
    trajectories = integrate_batch(spec, initials, s.t0, s.t1, cfg.integrator, threads=thread_count(cfg),
                                   sample_dt=s.sample_dt)
    orbits, artifacts = [], []
    for k, (x0, traj) in enumerate(zip(initials, trajectories)):
        artifacts.append(write_trajectory(out / _name(cfg, f'trajectory_{k}.csv'), traj, spec, cfg.canonical()))
        result, surface, track = _orbit_report(cfg, spec, k, x0, traj, out)
        artifacts.append(out / _name(cfg, f'nodal_track_{k}.csv'))
        orbits.append({'x0': x0, 'surface': surface.family.value, 'surface_c': surface.c_value,
                       'nodal_method': track.method.value, **result.to_dict()})
    report = {'task': 'report', 't0': s.t0, 't1': s.t1, 'orbits': orbits}
    artifacts.append(write_json(out / _name(cfg, 'report.json'), report))
    return report, artifacts


HANDLERS = {
    'simulate': simulate_handler,
    'retrace': retrace_handler,
    'classify': classify_handler,
    'nodal-track': nodal_track_handler,
    'xpoint': xpoint_handler,
    'perturb': perturb_handler,
    'project': project_handler,
    'report': report_handler,
}


def record_run(cfg: RunConfig, status: str, exit_code: int, out_dir, message: str, started: datetime,
               finished: datetime):
    """Adds a runlog row; a database failure is logged and otherwise ignored."""
    from .models import runlog
    try:
        runlog.objects.create(
            task=cfg.task, preset=cfg.preset or '', config_hash=config_hash(cfg.canonical()), status=status,
            exit_code=exit_code, out_dir=str(out_dir or ''), message=message[:2000], started_at=started,
            finished_at=finished, duration=(finished - started).total_seconds(),
        )
    except Exception as e:
        logging.error(f'record_run(): run log not written: {e}')


def run(cfg: RunConfig) -> RunResult:
    """
    Executes the configured task, writes its artifacts and manifest.json, and logs the run.

    Parameters:
        cfg (RunConfig): A validated configuration.

    Returns:
        RunResult: task, output directory, the task's result and the artifact paths.

    Raises:
        BohmError: Any configuration or numerical failure, after the run log records it.
    """
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    out = None
    try:
        out = output_dir(cfg)
        spec = cfg.spec()
        logging.info(f'run(): task {cfg.task}' + (f' (preset {cfg.preset})' if cfg.preset else '') + f' -> {out}')
        result, artifacts = HANDLERS[cfg.task](cfg, spec, out)
    except BohmError as e:
        finished = datetime.now(timezone.utc)
        logging.error(f'run(): {cfg.task} failed: {e}')
        record_run(cfg, 'error', e.exit_code, out, str(e), started, finished)
        raise
    finished = datetime.now(timezone.utc)
    artifacts.append(write_manifest(out, cfg.task, cfg.canonical(), started, finished, artifacts, cfg.preset))
    record_run(cfg, 'ok', 0, out, '', started, finished)
    duration = time.perf_counter() - clock
    logging.info(f'run(): {cfg.task} done in {duration:.2f}s, {len(artifacts)} artifacts')
    return RunResult(cfg.task, out, result, artifacts, duration)
