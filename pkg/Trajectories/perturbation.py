"""
Formal solutions as trigonometric series in the small amplitudes b and c.

With Psi = a Psi_p e^{-iE_p t} (1 + eps), eps = b q_b e^{-i D_b t} + c q_c e^{-i D_c t},
q_k = P_k / (a P_p) and D_k = E_k - E_p, the velocity is grad Im ln(1 + eps). Expanding the
logarithm and the position around the base point gives every order as a finite sum of
anchored cosines (cos(nu t) - 1) whose frequencies are integer combinations of D_b and D_c.
"""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from .eigenbasis import polynomial_jet
from .errors import DomainError, EliminationFailed, SecularTerm, SmallDivisor
from .wavefunction import WaveSpec

SMALL_DIVISOR = 1e-9
SPHERE_QUANTA = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
NONINTEGRABLE_QUANTA = ((0, 0, 0), (1, 0, 1), (0, 1, 2))
AXES = ('x', 'y', 'z')


class TermKind(str, Enum):
    COS = 'COS'
    SIN = 'SIN'
    CONST = 'CONST'


class IntegralKind(str, Enum):
    TIME_DEPENDENT = 'TIME_DEPENDENT'
    TIME_INDEPENDENT = 'TIME_INDEPENDENT'


@dataclass(frozen=True)
class TrigTerm:
    """
    coeff * b^b_pow * c^c_pow * g(freq t), with g = cos(.) - 1 for COS, sin for SIN, 1 for CONST.
    `harmonics` (k_b, k_c) gives freq = |k_b D_b + k_c D_c|.
    """
    coeff: float
    b_pow: int
    c_pow: int
    harmonics: tuple
    freq: float
    kind: TermKind = TermKind.COS

    def shape(self, t):
        if self.kind == TermKind.COS:
            return np.cos(self.freq * t) - 1.0
        if self.kind == TermKind.SIN:
            return np.sin(self.freq * t)
        return np.ones_like(t, dtype=float)

    def to_dict(self) -> dict:
        return {'coeff': self.coeff, 'b_pow': self.b_pow, 'c_pow': self.c_pow,
                'harmonics': list(self.harmonics), 'freq': self.freq, 'kind': self.kind.value}


@dataclass(frozen=True)
class TrigSeries:
    base: tuple
    terms: tuple
    b: float
    c: float
    deltas: tuple
    order: int
    t0: float = 0.0

    def evaluate(self, t) -> np.ndarray:
        """Position at time(s) t; shape (3,) for a scalar, (N, 3) for an array."""
        tau = np.asarray(t, dtype=float) - self.t0
        out = []
        for k in range(3):
            value = np.full_like(tau, self.base[k], dtype=float)
            for term in self.terms[k]:
                value = value + term.coeff * self.b ** term.b_pow * self.c ** term.c_pow * term.shape(tau)
            out.append(value)
        return np.stack(out, axis=-1)

    def frequencies(self) -> set:
        return {term.harmonics for terms in self.terms for term in terms}

    def angle_form(self, k: int, theta_b, theta_c):
        """Coordinate k as a function of the two angles D_b t and D_c t, with its two partials."""
        value, d_b, d_c = self.base[k], 0.0, 0.0
        for term in self.terms[k]:
            scale = term.coeff * self.b ** term.b_pow * self.c ** term.c_pow
            kb, kc = term.harmonics
            sign = 1.0 if kb * self.deltas[0] + kc * self.deltas[1] >= 0 else -1.0
            arg = sign * (kb * theta_b + kc * theta_c)
            if term.kind == TermKind.COS:
                value += scale * (math.cos(arg) - 1.0)
                d_b -= scale * math.sin(arg) * sign * kb
                d_c -= scale * math.sin(arg) * sign * kc
            elif term.kind == TermKind.SIN:
                value += scale * math.sin(arg)
                d_b += scale * math.cos(arg) * sign * kb
                d_c += scale * math.cos(arg) * sign * kc
            else:
                value += scale
        return value, d_b, d_c

    def to_dict(self) -> dict:
        return {
            'base': list(self.base),
            'order': self.order,
            't0': self.t0,
            'b': self.b,
            'c': self.c,
            'deltas': list(self.deltas),
            'terms': {axis: [term.to_dict() for term in terms] for axis, terms in zip(AXES, self.terms)},
        }


def _real_amplitudes(spec: WaveSpec):
    if any(a.imag != 0 for a in spec.amplitudes):
        raise DomainError('perturbation series need real amplitudes')
    a, b, c = (amp.real for amp in spec.amplitudes)
    if a == 0:
        raise DomainError('perturbation series need a nonzero leading amplitude a')
    return a, b, c


def _deltas(spec: WaveSpec):
    e = spec.energies
    deltas = (e[1] - e[0], e[2] - e[0])
    for name, d in zip(('D_b', 'D_c'), deltas):
        if abs(d) < SMALL_DIVISOR:
            raise SmallDivisor(f'frequency {name}={d:.3e} is below {SMALL_DIVISOR:g}')
    return deltas


def _ratio_jets(spec: WaveSpec, base, a: float):
    """Value, gradient and Hessian of q_b = P_r/(a P_p) and q_c = P_s/(a P_p) at the base point."""
    value_p, grad_p, hess_p = polynomial_jet(spec.modes[0], base)
    scale = max(1.0, float(np.max(np.abs(grad_p))) * (1.0 + float(np.linalg.norm(base))))
    if abs(value_p) < 1e-12 * scale:
        raise SmallDivisor(f'leading eigenfunction vanishes at the base point {tuple(base)}')
    jets = []
    for mode in spec.modes[1:]:
        value, grad, hess = polynomial_jet(mode, base)
        u = value / value_p
        grad_u = (grad - u * grad_p) / value_p
        hess_u = (hess - u * hess_p - np.outer(grad_u, grad_p) - np.outer(grad_p, grad_u)) / value_p
        jets.append((u / a, grad_u / a, hess_u / a))
    return jets


def _harmonic_freq(harmonics, deltas):
    return harmonics[0] * deltas[0] + harmonics[1] * deltas[1]


def _integrate_sines(rhs: dict, deltas) -> list:
    """
    Integrates sum coeff sin(nu s) over [0, t] term by term into anchored cosines.

    `rhs` maps (b_pow, c_pow, harmonics) to a coefficient 3-vector.
    """
    terms = [[], [], []]
    for (b_pow, c_pow, harmonics), vec in sorted(rhs.items()):
        if harmonics == (0, 0):
            continue
        nu = _harmonic_freq(harmonics, deltas)
        if abs(nu) < SMALL_DIVISOR:
            if np.any(vec != 0):
                raise SecularTerm(harmonics, nu)
            continue
        if nu < 0:
            vec, nu, harmonics = -vec, -nu, (-harmonics[0], -harmonics[1])
        for k in range(3):
            if vec[k] != 0:
                # int_0^t sin(nu s) ds = -(cos(nu t) - 1)/nu
                terms[k].append(TrigTerm(float(-vec[k] / nu), b_pow, c_pow, harmonics, float(nu)))
    return terms


def _add(rhs: dict, key, vec):
    rhs[key] = rhs.get(key, np.zeros(3)) + vec


def iterate_order(spec: WaveSpec, base, order: int = 1, t0: float = 0.0) -> TrigSeries:
    """
    Builds the formal solution through the requested order (1 or 2).

    Order 1 integrates grad Im(eps) at the base point. Order 2 adds -1/2 grad Im(eps^2) at the
    base point and the Hessian of Im(eps) applied to the order-1 displacement; products of
    trigonometric factors are reduced with sin A cos B = (sin(A+B) + sin(A-B))/2.

    Raises:
        SmallDivisor: If D_b or D_c vanish or the leading eigenfunction vanishes at the base point.
        SecularTerm: If a nonzero harmonic combination has zero frequency.
    """
    if order not in (1, 2):
        raise DomainError(f'iterate_order(): order must be 1 or 2, got {order}')
    base = np.asarray(base, dtype=float)
    a, b, c = _real_amplitudes(spec)
    deltas = _deltas(spec)
    (q_b, g_b, h_b), (q_c, g_c, h_c) = _ratio_jets(spec, base, a)
    unit = {'b': ((1, 0), (1, 0)), 'c': ((0, 1), (0, 1))}
    grads = {'b': g_b, 'c': g_c}
    hessians = {'b': h_b, 'c': h_c}
    values = {'b': q_b, 'c': q_c}
    freq = {'b': deltas[0], 'c': deltas[1]}

    # order 1: d x1/dt = -sum_k g_k sin(D_k t)
    first = {}
    for name in ('b', 'c'):
        pows, harm = unit[name]
        _add(first, (*pows, harm), -grads[name])
    terms = _integrate_sines(first, deltas)

    if order == 2:
        second = {}
        # -1/2 grad Im(eps^2)
        _add(second, (2, 0, (2, 0)), q_b * g_b)
        _add(second, (1, 1, (1, 1)), q_b * g_c + q_c * g_b)
        _add(second, (0, 2, (0, 2)), q_c * g_c)
        # H[Im eps] x1 = -sum_{k,l} H_k g_l / D_l sin(D_k t) (cos(D_l t) - 1)
        for k in ('b', 'c'):
            for l in ('b', 'c'):
                vec = -(hessians[k] @ grads[l]) / freq[l]
                pows = tuple(int(v) for v in np.add(unit[k][0], unit[l][0]))
                hk, hl = np.array(unit[k][1]), np.array(unit[l][1])
                _add(second, (*pows, tuple(int(v) for v in hk + hl)), 0.5 * vec)
                _add(second, (*pows, tuple(int(v) for v in hk - hl)), 0.5 * vec)
                _add(second, (*pows, tuple(int(v) for v in hk)), -vec)
        for k, extra in enumerate(_integrate_sines(second, deltas)):
            terms[k].extend(extra)

    return TrigSeries(tuple(float(v) for v in base), tuple(tuple(t) for t in terms), b, c, deltas, order, t0)


def _require_modes(spec: WaveSpec, quanta, name):
    if spec.quanta != quanta:
        raise DomainError(f'{name}(): needs modes {quanta} in this order, got {spec.quanta}')


def order1_sphere(spec: WaveSpec, base, t0: float = 0.0) -> TrigSeries:
    """
    First-order solution for the modes 100/010/001, with q1 = a^2 w1 and w_ij = w_i - w_j:

        x = x0 + [ab sqrt(w1 w2) y0 (cos w12 t - 1)/w12 + ac sqrt(w1 w3) z0 (cos w13 t - 1)/w13] / (q1 x0^2)
        y = y0 - ab sqrt(w1 w2) (cos w12 t - 1) / (q1 x0 w12)
        z = z0 - ac sqrt(w1 w3) (cos w13 t - 1) / (q1 x0 w13)

    Raises:
        SmallDivisor: If |x0| < 1e-6 or a frequency difference is below 1e-9.
    """
    _require_modes(spec, SPHERE_QUANTA, 'order1_sphere')
    x0, y0, z0 = (float(v) for v in base)
    if abs(x0) < 1e-6:
        raise SmallDivisor(f'order1_sphere(): x0={x0} is too close to 0')
    a, b, c = _real_amplitudes(spec)
    w1, w2, w3 = spec.omegas
    w12, w13 = w1 - w2, w1 - w3
    for name, w in (('w12', w12), ('w13', w13)):
        if abs(w) < SMALL_DIVISOR:
            raise SmallDivisor(f'order1_sphere(): {name}={w:.3e} is below {SMALL_DIVISOR:g}')
    q1 = a * a * w1
    rb, rc = a * math.sqrt(w1 * w2), a * math.sqrt(w1 * w3)
    # cos(w12 t) = cos(D_b t) with D_b = w2 - w1 = -w12
    hb = (1, 0) if w12 < 0 else (-1, 0)
    hc = (0, 1) if w13 < 0 else (0, -1)
    fb, fc = abs(w12), abs(w13)
    terms = (
        (TrigTerm(rb * y0 / (q1 * x0 * x0 * w12), 1, 0, hb, fb),
         TrigTerm(rc * z0 / (q1 * x0 * x0 * w13), 0, 1, hc, fc)),
        (TrigTerm(-rb / (q1 * x0 * w12), 1, 0, hb, fb),),
        (TrigTerm(-rc / (q1 * x0 * w13), 0, 1, hc, fc),),
    )
    return TrigSeries((x0, y0, z0), terms, b, c, (w2 - w1, w3 - w1), 1, t0)


def order1_nonintegrable(spec: WaveSpec, base, t0: float = 0.0) -> TrigSeries:
    """
    First-order solution for the modes 000/101/012, with D_b = w1 + w3 and D_c = w2 + 2 w3:

        x = x0 + 2b sqrt(w1 w3) z0 (cos D_b t - 1) / (a D_b)
        y = y0 + c sqrt(w2) (2 w3 z0^2 - 1) (cos D_c t - 1) / (a D_c)
        z = z0 + 2b sqrt(w1 w3) x0 (cos D_b t - 1) / (a D_b) + 4c sqrt(w2) w3 y0 z0 (cos D_c t - 1) / (a D_c)
    """
    _require_modes(spec, NONINTEGRABLE_QUANTA, 'order1_nonintegrable')
    x0, y0, z0 = (float(v) for v in base)
    a, b, c = _real_amplitudes(spec)
    w1, w2, w3 = spec.omegas
    d_b, d_c = w1 + w3, w2 + 2.0 * w3
    kb = 2.0 * math.sqrt(w1 * w3) / (a * d_b)
    kc = math.sqrt(w2) / (a * d_c)
    terms = (
        (TrigTerm(kb * z0, 1, 0, (1, 0), d_b),),
        (TrigTerm(kc * (2.0 * w3 * z0 * z0 - 1.0), 0, 1, (0, 1), d_c),),
        (TrigTerm(kb * x0, 1, 0, (1, 0), d_b), TrigTerm(4.0 * kc * w3 * y0 * z0, 0, 1, (0, 1), d_c)),
    )
    terms = tuple(tuple(t for t in row if t.coeff != 0) for row in terms)
    return TrigSeries((x0, y0, z0), terms, b, c, (d_b, d_c), 1, t0)


def _first_order_matrix(series: TrigSeries) -> np.ndarray:
    """m[k, j]: coefficient of (cos(D_j t) - 1) in coordinate k at order 1."""
    m = np.zeros((3, 2))
    for k in range(3):
        for term in series.terms[k]:
            if term.b_pow + term.c_pow == 1 and term.kind == TermKind.COS:
                j = 0 if term.b_pow == 1 else 1
                m[k, j] += term.coeff * series.b ** term.b_pow * series.c ** term.c_pow
    return m


@dataclass(frozen=True)
class FormalIntegral:
    kind: IntegralKind
    label: str
    order: int
    series: TrigSeries = field(repr=False)
    normal: tuple = None

    def angles(self, x, y):
        """Principal-branch angles (D_b t, D_c t) in [0, pi] reproducing the given x and y."""
        return _solve_angles(self.series, x, y)

    def residual(self, point, t: float = None) -> float:
        """
        How far a point (and time, for TIME_DEPENDENT integrals) is from satisfying the relation.
        """
        x, y, z = (float(v) for v in point)
        if self.kind == IntegralKind.TIME_INDEPENDENT:
            if self.normal is not None:
                return float(np.dot(self.normal, np.array([x, y, z]) - np.array(self.series.base)))
            theta = self.angles(x, y)
            return z - self.series.angle_form(2, *theta)[0]
        if t is None:
            raise DomainError(f'{self.label}: time-dependent integrals need t')
        j = 0 if self.label == 'b' else 1
        theta = self.angles(x, y)
        return math.cos(theta[j]) - math.cos(self.series.deltas[j] * (t - self.series.t0))

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'label': self.label, 'order': self.order,
                'normal': list(self.normal) if self.normal is not None else None,
                'base': list(self.series.base)}


def _solve_angles(series: TrigSeries, x: float, y: float, max_iter: int = 40):
    m = _first_order_matrix(series)
    mxy = m[:2]
    if abs(np.linalg.det(mxy)) < 1e-10:
        raise EliminationFailed(f'x and y are not invertible in the two cosines (det {np.linalg.det(mxy):.3e})')
    u = np.linalg.solve(mxy, np.array([x, y]) - np.array(series.base[:2]))
    theta = np.arccos(np.clip(1.0 + u, -1.0, 1.0))
    if series.order == 1:
        return theta
    # order 2 terms are not linear in the cosines; Newton from the first-order angles
    theta = np.clip(theta, 1e-6, math.pi - 1e-6)
    for _ in range(max_iter):
        fx, dxb, dxc = series.angle_form(0, *theta)
        fy, dyb, dyc = series.angle_form(1, *theta)
        jac = np.array([[dxb, dxc], [dyb, dyc]])
        residual = np.array([fx - x, fy - y])
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError as err:
            raise EliminationFailed('singular angle Jacobian') from err
        theta = theta + step
        if np.linalg.norm(step) < 1e-13:
            return theta
    raise EliminationFailed(f'no principal-branch angles reproduce x={x}, y={y}')


def formal_integral_surface(series: TrigSeries) -> FormalIntegral:
    """
    The time-independent formal integral z = z(x, y).

    At order 1 the two cosines are eliminated linearly and the result is the plane
    n . (x - x0) = 0 with n = (-(m_z M^-1)_x, -(m_z M^-1)_y, 1), M the (x, y) cosine matrix.
    At order 2 the relation is evaluated through the principal-branch angles.

    Raises:
        EliminationFailed: When |det M| < 1e-10.
    """
    m = _first_order_matrix(series)
    det = np.linalg.det(m[:2])
    if abs(det) < 1e-10:
        raise EliminationFailed(f'formal_integral_surface(): (x, y) cosine matrix is singular (det {det:.3e})')
    if series.order == 1:
        row = m[2] @ np.linalg.inv(m[:2])
        return FormalIntegral(IntegralKind.TIME_INDEPENDENT, 'surface', 1, series,
                              (float(-row[0]), float(-row[1]), 1.0))
    return FormalIntegral(IntegralKind.TIME_INDEPENDENT, 'surface', series.order, series)


def formal_integrals(series: TrigSeries) -> list:
    """The two time-dependent integrals (one per cosine) followed by the time-independent one."""
    surface = formal_integral_surface(series)
    return [
        FormalIntegral(IntegralKind.TIME_DEPENDENT, 'b', series.order, series),
        FormalIntegral(IntegralKind.TIME_DEPENDENT, 'c', series.order, series),
        surface,
    ]


def deviation(series: TrigSeries, trajectory, dt: float = 0.05) -> pd.DataFrame:
    """
    Per-coordinate |numerical - series| on a uniform grid of spacing dt.

    Returns:
        DataFrame: columns t, sigma_x, sigma_y, sigma_z.
    """
    times = np.asarray(trajectory.times, dtype=float)
    points = np.asarray(trajectory.points, dtype=float)
    if times[-1] < times[0]:
        times, points = times[::-1], points[::-1]
    grid = np.arange(times[0], times[-1] + 0.5 * dt, dt)
    grid = grid[grid <= times[-1] + 1e-12]
    numeric = CubicSpline(times, points, axis=0)(grid)
    sigma = np.abs(numeric - series.evaluate(grid))
    return pd.DataFrame({'t': grid, 'sigma_x': sigma[:, 0], 'sigma_y': sigma[:, 1], 'sigma_z': sigma[:, 2]})
