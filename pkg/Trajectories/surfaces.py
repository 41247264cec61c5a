"""
Partial-integrability classification from quantum numbers and the conserved functions
f(x, y, z) = C of the three studied surface families.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, NoSurface, OffSurface, OutOfRange, UnsupportedSurface
from .wavefunction import WaveSpec


class IntegrabilityKind(str, Enum):
    FULLY_INTEGRABLE = 'FULLY_INTEGRABLE'
    PARTIAL = 'PARTIAL'
    NONE = 'NONE'


class Family(str, Enum):
    SPHERE = 'SPHERE'
    PEAR = 'PEAR'
    OPEN = 'OPEN'
    GENERIC = 'GENERIC'


# Each case is three equalities (term, term, axis) over the triplets p, r, s = terms 0, 1, 2.
TABLE_CASES = {
    1: ((1, 0, 0), (2, 1, 1), (2, 0, 2)),
    2: ((1, 0, 0), (2, 0, 1), (2, 1, 2)),
    3: ((2, 1, 0), (1, 0, 1), (2, 0, 2)),
    4: ((2, 1, 0), (2, 0, 1), (1, 0, 2)),
    5: ((2, 0, 0), (1, 0, 1), (2, 1, 2)),
    6: ((2, 0, 0), (2, 1, 1), (1, 0, 2)),
}

FAMILY_QUANTA = {
    Family.SPHERE: {(1, 0, 0), (0, 1, 0), (0, 0, 1)},
    Family.PEAR: {(1, 0, 0), (0, 1, 0), (0, 0, 2)},
    Family.OPEN: {(0, 0, 0), (1, 1, 0), (1, 0, 2)},
}

ON_SURFACE_TOL = 1e-6


@dataclass(frozen=True)
class IntegrabilityClass:
    kind: IntegrabilityKind
    matched_cases: tuple

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'matched_cases': list(self.matched_cases)}


def classify_quanta(quanta, present=None) -> IntegrabilityClass:
    """
    Checks the six quantum-number conditions for partially integrable trajectories.

    Parameters:
        quanta (sequence): Three quantum-number triplets (p, r, s).
        present (sequence of bool): Which terms carry a nonzero amplitude; all by default.

    Returns:
        IntegrabilityClass: FULLY_INTEGRABLE when two or more cases hold or fewer than three
        distinct triplets are present, PARTIAL for exactly one case, NONE otherwise.

    Example:
        >>> classify_quanta([(1, 0, 0), (0, 1, 0), (0, 0, 1)]).kind
        <IntegrabilityKind.PARTIAL: 'PARTIAL'>
    """
    quanta = [tuple(int(n) for n in q) for q in quanta]
    present = [True] * 3 if present is None else list(present)
    matched = tuple(
        case for case, checks in TABLE_CASES.items()
        if all(quanta[i][axis] == quanta[j][axis] for i, j, axis in checks)
    )
    distinct = {q for q, keep in zip(quanta, present) if keep}
    if len(distinct) < 3 or len(matched) >= 2:
        kind = IntegrabilityKind.FULLY_INTEGRABLE
    elif len(matched) == 1:
        kind = IntegrabilityKind.PARTIAL
    else:
        kind = IntegrabilityKind.NONE
    return IntegrabilityClass(kind, matched)


def classify_integrability(spec: WaveSpec) -> IntegrabilityClass:
    return classify_quanta(spec.quanta, [abs(a) > 0 for a in spec.amplitudes])


def surface_family(spec: WaveSpec) -> Family:
    """The surface family matching the wavefunction's quantum numbers, GENERIC otherwise."""
    quanta = set(spec.quanta)
    for family, expected in FAMILY_QUANTA.items():
        if quanta == expected:
            return family
    return Family.GENERIC


def phi_and_extrema(omega3: float):
    """
    Phi(z) = z^2/2 - ln|z|/(2 w3), its minimiser z0 = 1/sqrt(2 w3) and C0 = Phi(z0).

    Example:
        >>> _, z0, c0 = phi_and_extrema(3 ** 0.5)
        >>> round(z0, 4), round(c0, 4)
        (0.5373, 0.3237)
    """
    if not omega3 > 0:
        raise DomainError(f'phi_and_extrema(): omega3 must be positive, got {omega3}')

    def phi(z):
        return 0.5 * np.square(z) - np.log(np.abs(z)) / (2.0 * omega3)

    z0 = 1.0 / math.sqrt(2.0 * omega3)
    return phi, z0, float(phi(z0))


def _phi_prime(z, omega3):
    return z - 1.0 / (2.0 * omega3 * z)


def surface_value(family, x, omega3: float = None):
    """
    Conserved function of a surface family at x (shape (3,) or (..., 3)).

    SPHERE: x^2+y^2+z^2. PEAR: x^2+y^2+Phi(z). OPEN: -x^2+y^2+Phi(z).
    """
    family = Family(family)
    x = np.asarray(x, dtype=float)
    xs, ys, zs = x[..., 0], x[..., 1], x[..., 2]
    if family == Family.SPHERE:
        out = xs * xs + ys * ys + zs * zs
    elif family in (Family.PEAR, Family.OPEN):
        if np.any(zs == 0):
            raise DomainError(f'surface_value(): {family.value} surface is undefined at z=0')
        phi, _, _ = phi_and_extrema(omega3)
        sign = 1.0 if family == Family.PEAR else -1.0
        out = sign * xs * xs + ys * ys + phi(zs)
    else:
        raise UnsupportedSurface('surface_value(): GENERIC surfaces carry their own function')
    return float(out) if np.ndim(out) == 0 else out


def surface_gradient(family, x, omega3: float = None) -> np.ndarray:
    family = Family(family)
    x = np.asarray(x, dtype=float)
    if family == Family.SPHERE:
        return 2.0 * x
    if family in (Family.PEAR, Family.OPEN):
        if np.any(x[..., 2] == 0):
            raise DomainError(f'surface_gradient(): {family.value} surface is undefined at z=0')
        sign = 1.0 if family == Family.PEAR else -1.0
        return np.stack([2.0 * sign * x[..., 0], 2.0 * x[..., 1], _phi_prime(x[..., 2], omega3)], axis=-1)
    raise UnsupportedSurface('surface_gradient(): GENERIC surfaces carry their own gradient')


@dataclass(frozen=True)
class IntegralSurface:
    family: Family
    c_value: float
    omega3: float = None
    func: Callable = None
    grad: Callable = None

    def __post_init__(self):
        object.__setattr__(self, 'family', Family(self.family))
        c = float(self.c_value)
        if not math.isfinite(c):
            raise NoSurface(f'surface level must be finite, got {c}')
        if self.family == Family.SPHERE and c <= 0:
            raise NoSurface(f'a sphere needs R^2 > 0, got {c}')
        if self.family in (Family.PEAR, Family.OPEN):
            if self.omega3 is None:
                raise NoSurface(f'{self.family.value} surface needs omega3')
            if self.family == Family.PEAR:
                _, _, c0 = phi_and_extrema(self.omega3)
                if c <= c0:
                    raise NoSurface(f'pear surfaces need C > C0={c0:.6f}, got {c}')
        if self.family == Family.GENERIC and self.func is None:
            raise NoSurface('a GENERIC surface needs a conserved function')

    @classmethod
    def through(cls, family, x, omega3: float = None) -> 'IntegralSurface':
        """The member of a family passing through the point x."""
        return cls(Family(family), surface_value(family, x, omega3), omega3)

    @classmethod
    def sphere(cls, radius: float) -> 'IntegralSurface':
        return cls(Family.SPHERE, radius * radius)

    def value(self, x):
        if self.family == Family.GENERIC:
            return self.func(np.asarray(x, dtype=float))
        return surface_value(self.family, x, self.omega3)

    def gradient(self, x) -> np.ndarray:
        if self.family == Family.GENERIC:
            if self.grad is None:
                raise UnsupportedSurface('GENERIC surface has no gradient')
            return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)
        return surface_gradient(self.family, x, self.omega3)

    def residual(self, x):
        return self.value(x) - self.c_value


def pear_z_range(C: float, omega3: float):
    """
    The two positive roots z_min < z0 < z_max of Phi(z) = C.

    Raises:
        NoSurface: If C <= C0.
    """
    phi, z0, c0 = phi_and_extrema(omega3)
    if C <= c0:
        raise NoSurface(f'pear_z_range(): C={C} is not above C0={c0:.10f}')
    if phi(z0) >= C:
        return z0, z0

    def gap(z):
        return float(phi(z)) - C

    z_lo = math.exp(-2.0 * omega3 * (abs(C) + 1.0))
    z_hi = 2.0 * z0
    while gap(z_hi) <= 0:
        z_hi *= 2.0
    z_min = optimize.bisect(gap, z_lo, z0, xtol=1e-13, maxiter=400)
    z_max = optimize.bisect(gap, z0, z_hi, xtol=1e-13, maxiter=400)
    return z_min, z_max


class SphereCoords(NamedTuple):
    theta: float
    phi: float

    @property
    def pole_degenerate(self):
        return np.sin(self.theta) < 1e-12


class PearCoords(NamedTuple):
    s: float
    phi: float


def sphere_coords(x) -> SphereCoords:
    """
    theta = arccos(z/R) in [0, pi], phi = atan2(y, x) in (-pi, pi]; works on (..., 3) arrays.

    At the poles phi is meaningless; `pole_degenerate` flags it.

    Example:
        >>> sphere_coords((2.0, 0.0, 0.0))
        SphereCoords(theta=1.5707963267948966, phi=0.0)
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise DomainError('sphere_coords(): the origin has no spherical angles')
    theta = np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(x[..., 1], x[..., 0])
    if np.ndim(theta) == 0:
        return SphereCoords(float(theta), float(phi))
    return SphereCoords(theta, phi)


def _gap_ratio(a, delta, omega3):
    # (C - Phi(a + delta)) / delta where Phi(a) = C, free of cancellation for small delta
    if delta == 0:
        return -_phi_prime(a, omega3)
    return -(2.0 * a + delta) / 2.0 + math.log1p(delta / a) / (2.0 * omega3 * delta)


def _arc_from_end(end: float, length: float, side: float, omega3: float) -> float:
    """
    Meridian arc length from a turning point `end` over `length` in direction `side` (+1 from
    z_min upwards, -1 from z_max downwards), using zeta = end + side u^2.
    """
    if length <= 0:
        return 0.0

    def integrand(u):
        delta = side * u * u
        slope = _phi_prime(end + delta, omega3)
        return math.sqrt(4.0 * u * u + slope * slope / abs(_gap_ratio(end, delta, omega3)))

    value, _ = integrate.quad(integrand, 0.0, math.sqrt(length), epsabs=1e-12, epsrel=1e-12, limit=200)
    return value


def meridian_length_to(z: float, z_min: float, z_max: float, omega3: float) -> float:
    mid = 0.5 * (z_min + z_max)
    if z <= mid:
        return _arc_from_end(z_min, z - z_min, 1.0, omega3)
    return (_arc_from_end(z_min, mid - z_min, 1.0, omega3)
            + _arc_from_end(z_max, z_max - mid, -1.0, omega3)
            - _arc_from_end(z_max, z_max - z, -1.0, omega3))


def pear_arc_length(C: float, omega3: float) -> float:
    """Length of the pear meridian from z_min to z_max."""
    z_min, z_max = pear_z_range(C, omega3)
    return meridian_length_to(z_max, z_min, z_max, omega3)


def pear_coords(x, C: float, omega3: float, z_ref: float) -> PearCoords:
    """
    Intrinsic pear-surface coordinates (s, phi).

    s is the meridian arc length from the level z_ref (the nodal point's z) to the point,
    positive towards z_max; phi = atan2(y, x).

    Parameters:
        x (array-like): A point on the surface Phi-level C.
        C (float): Surface level, above C0.
        omega3 (float): z-frequency.
        z_ref (float): Origin of s.

    Returns:
        PearCoords: (s, phi).

    Raises:
        OffSurface: If the point is farther than 1e-6 from the level C.
        OutOfRange: If z or z_ref lies outside [z_min, z_max].
    """
    x = np.asarray(x, dtype=float)
    if x[2] <= 0:
        raise OutOfRange(f'pear_coords(): z={x[2]} is not on the upper pear')
    off = surface_value(Family.PEAR, x, omega3) - C
    if abs(off) > ON_SURFACE_TOL:
        raise OffSurface(f'pear_coords(): point is {off:.3e} off the surface C={C}')
    z_min, z_max = pear_z_range(C, omega3)
    slack = 1e-9 * max(1.0, z_max)
    for name, z in (('z', x[2]), ('z_ref', z_ref)):
        if not z_min - slack <= z <= z_max + slack:
            raise OutOfRange(f'pear_coords(): {name}={z} outside [{z_min}, {z_max}]')
    z = min(max(float(x[2]), z_min), z_max)
    ref = min(max(float(z_ref), z_min), z_max)
    s = meridian_length_to(z, z_min, z_max, omega3) - meridian_length_to(ref, z_min, z_max, omega3)
    return PearCoords(s, float(math.atan2(x[1], x[0])))
