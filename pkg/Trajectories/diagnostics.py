"""
Orbit-level indicators of order and chaos: surface drift, approaches to the nodal point,
chart occupancy and a heuristic ordered/chaotic label.
"""
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DomainError, OffSurface, SpanMismatch
from .surfaces import Family, IntegralSurface, meridian_length_to, pear_z_range, sphere_coords

D_CLOSE = 0.2
D_LOOP = 0.5
RETRACE_THRESHOLD = 1e-3
SPREAD_THRESHOLD = 0.4
DEFAULT_BINS = (36, 18)


class Chart(str, Enum):
    SPHERE_THETA_PHI = 'SPHERE_THETA_PHI'
    PEAR_S_PHI = 'PEAR_S_PHI'


class OrbitLabel(str, Enum):
    ORDERED_CANDIDATE = 'ORDERED_CANDIDATE'
    CHAOTIC_CANDIDATE = 'CHAOTIC_CANDIDATE'
    UNLABELED = 'UNLABELED'


class NodeApproach(NamedTuple):
    min_distance: float
    t_min: float
    loop_interval: tuple


@dataclass
class Occupancy:
    counts: np.ndarray
    u_edges: np.ndarray
    v_edges: np.ndarray

    def rows(self):
        """(bin_u, bin_v, count) triples with bin centres, for CSV export."""
        u = 0.5 * (self.u_edges[:-1] + self.u_edges[1:])
        v = 0.5 * (self.v_edges[:-1] + self.v_edges[1:])
        for i, uc in enumerate(u):
            for j, vc in enumerate(v):
                yield float(uc), float(vc), float(self.counts[i, j])

    @property
    def visited_fraction(self) -> float:
        return float(np.count_nonzero(self.counts)) / self.counts.size


@dataclass
class OrbitReport:
    surface_drift_max: float
    min_node_distance: float
    t_min_node_distance: float
    node_loop_interval: tuple
    retrace_error: float
    spread: float
    label: OrbitLabel

    def to_dict(self) -> dict:
        out = asdict(self)
        out['label'] = self.label.value
        out['node_loop_interval'] = list(self.node_loop_interval) if self.node_loop_interval else None
        return out


def surface_drift(traj, surface: IntegralSurface) -> np.ndarray:
    """|f(x(t)) - C| per sample."""
    return np.abs(np.asarray(surface.value(traj.points)) - surface.c_value)


def node_approach(traj, track, d_loop: float = D_LOOP) -> NodeApproach:
    """
    Distance between orbit and node at the orbit's sample times.

    Returns the minimum distance, when it happens, and the initial interval during which the
    orbit stays within d_loop of the node (None when it starts farther away).

    Raises:
        SpanMismatch: If the track does not cover the orbit's time span.
    """
    times = np.asarray(traj.times, dtype=float)
    t_lo, t_hi = float(np.min(times)), float(np.max(times))
    track_times = track.times
    slack = 1e-9 * max(1.0, abs(t_hi))
    if track_times[0] > t_lo + slack or track_times[-1] < t_hi - slack:
        raise SpanMismatch(
            f'node_approach(): track covers [{track_times[0]}, {track_times[-1]}], orbit needs [{t_lo}, {t_hi}]'
        )
    distance = np.linalg.norm(np.asarray(traj.points) - track.at(times), axis=-1)
    k = int(np.argmin(distance))
    loop = None
    if distance[0] < d_loop:
        outside = np.nonzero(distance >= d_loop)[0]
        if outside.size:
            j = int(outside[0])
            w = (d_loop - distance[j - 1]) / (distance[j] - distance[j - 1])
            loop = (float(times[0]), float(times[j - 1] + w * (times[j] - times[j - 1])))
        else:
            loop = (float(times[0]), float(times[-1]))
    return NodeApproach(float(distance[k]), float(times[k]), loop)


def _pear_s(points, surface: IntegralSurface, z_ref: float):
    z_min, z_max = pear_z_range(surface.c_value, surface.omega3)
    # cosine spacing keeps the table dense near the turning points
    z_table = z_min + (z_max - z_min) * 0.5 * (1.0 - np.cos(np.linspace(0.0, math.pi, 801)))
    s_table = np.array([meridian_length_to(z, z_min, z_max, surface.omega3) for z in z_table])
    s_ref = np.interp(z_ref, z_table, s_table)
    return np.interp(points[:, 2], z_table, s_table) - s_ref, (s_table[0] - s_ref, s_table[-1] - s_ref)


def chart_coords(points, chart: Chart, surface: IntegralSurface = None, z_ref: float = None,
                 tol: float = 1e-6):
    """
    Chart coordinates (u, v) = (phi, theta) or (phi, s) for points on the charted surface.

    Returns:
        tuple: u array, v array and the v range of the chart.

    Raises:
        OffSurface: If a point is farther than tol from the surface.
    """
    chart = Chart(chart)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if surface is not None:
        off = np.abs(np.asarray(surface.value(points)) - surface.c_value)
        if np.any(off > tol):
            raise OffSurface(f'chart_coords(): point {int(np.argmax(off))} is {float(np.max(off)):.3e} off the surface')
    if chart == Chart.SPHERE_THETA_PHI:
        theta, phi = sphere_coords(points)
        return phi, theta, (0.0, math.pi)
    if surface is None or surface.family != Family.PEAR:
        raise DomainError('chart_coords(): the (s, phi) chart needs a pear surface')
    if z_ref is None:
        z_ref = pear_z_range(surface.c_value, surface.omega3)[0]
    s, s_range = _pear_s(points, surface, z_ref)
    return np.arctan2(points[:, 1], points[:, 0]), s, s_range


def occupancy(points, chart: Chart, bins=DEFAULT_BINS, surface: IntegralSurface = None,
              z_ref: float = None) -> Occupancy:
    """
    Normalised 2-D histogram of points (an orbit or a node track) in chart coordinates.

    Example:
        >>> occ = occupancy(traj.points, Chart.SPHERE_THETA_PHI, bins=(36, 18))
        >>> round(float(occ.counts.sum()), 12)
        1.0
    """
    if hasattr(points, 'positions'):
        points = points.positions
    elif hasattr(points, 'points') and not isinstance(points, np.ndarray):
        points = points.points
    u, v, v_range = chart_coords(points, chart, surface, z_ref)
    counts, u_edges, v_edges = np.histogram2d(u, v, bins=bins, range=[(-math.pi, math.pi), v_range])
    total = counts.sum()
    return Occupancy(counts / total if total else counts, u_edges, v_edges)


def special_directions(spec) -> np.ndarray:
    """
    Azimuths where the spherical node crosses z = 0: +/-arctan(a sqrt(w1) / (b sqrt(w2))) and
    their opposites, which for a = b are +/-arctan(sqrt(w1/w2)).
    """
    a, b = abs(spec.amplitudes[0]), abs(spec.amplitudes[1])
    base = math.atan(a * math.sqrt(spec.omegas[0]) / (b * math.sqrt(spec.omegas[1])))
    return np.array([base, -base, math.pi - base, base - math.pi])


def direction_concentration(points, directions, width: float = 0.1, band: float = 0.2) -> float:
    """
    Fraction of points within `width` (in phi) of any of the given directions, counting only
    points in the equatorial band |cos theta| < band where phi is well defined.
    """
    if hasattr(points, 'positions'):
        points = points.positions
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    theta, phi = sphere_coords(points)
    keep = np.abs(np.cos(theta)) < band
    if not np.any(keep):
        raise DomainError('direction_concentration(): no points in the equatorial band')
    gaps = np.abs(np.angle(np.exp(1j * (phi[keep, None] - np.asarray(directions)[None, :]))))
    return float(np.mean(np.min(gaps, axis=1) <= width))


def time_overlap(orbit, track, chart: Chart = Chart.SPHERE_THETA_PHI, bins=DEFAULT_BINS,
                 windows: int = 20, surface: IntegralSurface = None) -> float:
    """
    Share of the orbit's (time window, chart bin) cells that the node track also visits.

    0 means orbit and node never occupy the same region at the same time.
    """
    times = np.asarray(orbit.times, dtype=float)
    t_edges = np.linspace(times.min(), times.max(), windows + 1)
    track_times = track.times
    inside = (track_times >= t_edges[0]) & (track_times <= t_edges[-1])
    cells = []
    for stamps, pts in ((times, orbit.points), (track_times[inside], track.positions[inside])):
        u, v, v_range = chart_coords(pts, chart, surface if chart == Chart.PEAR_S_PHI else None)
        iu = np.clip(((u + math.pi) / (2 * math.pi) * bins[0]).astype(int), 0, bins[0] - 1)
        iv = np.clip(((v - v_range[0]) / (v_range[1] - v_range[0]) * bins[1]).astype(int), 0, bins[1] - 1)
        iw = np.clip(np.searchsorted(t_edges, stamps, side='right') - 1, 0, windows - 1)
        cells.append(set(zip(iw.tolist(), iu.tolist(), iv.tolist())))
    if not cells[0]:
        return 0.0
    return len(cells[0] & cells[1]) / len(cells[0])


def label_orbit(traj, surface: IntegralSurface, track, retrace_error: float, chart: Chart = None,
                d_close: float = D_CLOSE, d_loop: float = D_LOOP, retrace_threshold: float = RETRACE_THRESHOLD,
                spread_threshold: float = SPREAD_THRESHOLD, bins=DEFAULT_BINS) -> OrbitReport:
    """
    Heuristic ordered/chaotic label from three signals: a close node approach (< d_close),
    a large retrace error and a wide spread over chart bins.

    ORDERED_CANDIDATE needs all three signals quiet; CHAOTIC_CANDIDATE needs at least two of them.
    Anything in between stays UNLABELED.
    """
    if chart is None and surface.family in (Family.SPHERE, Family.PEAR):
        chart = Chart.PEAR_S_PHI if surface.family == Family.PEAR else Chart.SPHERE_THETA_PHI
    drift = surface_drift(traj, surface)
    approach = node_approach(traj, track, d_loop)
    spread = math.nan
    if chart is not None:
        spread = occupancy(traj.points, chart, bins, surface if chart == Chart.PEAR_S_PHI else None).visited_fraction
    # open surfaces have no chart; the spread signal stays quiet there
    signals = [approach.min_distance < d_close, retrace_error >= retrace_threshold,
               chart is not None and spread >= spread_threshold]
    if not any(signals):
        label = OrbitLabel.ORDERED_CANDIDATE
    elif sum(signals) >= 2:
        label = OrbitLabel.CHAOTIC_CANDIDATE
    else:
        label = OrbitLabel.UNLABELED
    return OrbitReport(float(np.max(drift)), approach.min_distance, approach.t_min, approach.loop_interval,
                       float(retrace_error), spread, label)

