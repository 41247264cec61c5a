"""
Harmonic-oscillator eigenfunctions in natural units (m = hbar = 1).

Every function broadcasts over leading axes of `x`: a single point has shape (3,),
a grid of points has shape (..., 3).
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import SpecError

MAX_QUANTUM = 20


@dataclass(frozen=True)
class OscillatorMode:
    n: int
    omega: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise SpecError(f'quantum number must be a non-negative integer, got {self.n}')
        if self.n > MAX_QUANTUM:
            raise SpecError(f'quantum number {self.n} exceeds the supported maximum {MAX_QUANTUM}')
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise SpecError(f'frequency must be positive and finite, got {self.omega}')
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'omega', float(self.omega))


@dataclass(frozen=True)
class Mode3D:
    modes: tuple

    def __post_init__(self):
        if len(self.modes) != 3:
            raise SpecError(f'a 3-d mode needs exactly three oscillator modes, got {len(self.modes)}')
        object.__setattr__(self, 'modes', tuple(self.modes))
        e = energy(self)
        if not (math.isfinite(e) and e > 0):
            raise SpecError(f'mode energy must be finite and positive, got {e}')

    @classmethod
    def from_quanta(cls, quanta, omegas) -> 'Mode3D':
        """
        Builds a Mode3D from a quantum-number triplet and a frequency triplet.

        Example:
            >>> Mode3D.from_quanta((1, 0, 0), (1.0, 2 ** 0.5, 3 ** 0.5)).quanta
            (1, 0, 0)
        """
        if len(quanta) != 3 or len(omegas) != 3:
            raise SpecError('quanta and omegas must both be triplets')
        return cls(tuple(OscillatorMode(n, w) for n, w in zip(quanta, omegas)))

    @property
    def quanta(self) -> tuple:
        return tuple(m.n for m in self.modes)

    @property
    def omegas(self) -> tuple:
        return tuple(m.omega for m in self.modes)


def hermite(n: int, u):
    """
    Physicists' Hermite polynomial H_n(u) by the three-term recurrence
    H_{k+1} = 2u H_k - 2k H_{k-1}.

    Parameters:
        n (int): Non-negative degree.
        u (float or ndarray): Evaluation point(s).

    Returns:
        float or ndarray: H_n(u), same shape as `u`.

    Example:
        >>> hermite(4, 1.0)
        -20.0
    """
    if n < 0:
        raise SpecError(f'hermite degree must be non-negative, got {n}')
    h_prev = np.ones_like(u, dtype=float) if isinstance(u, np.ndarray) else 1.0
    if n == 0:
        return h_prev
    h = 2.0 * u
    for k in range(1, n):
        h_prev, h = h, 2.0 * u * h - 2.0 * k * h_prev
    return h


def normalization(n: int, omega: float) -> float:
    return (omega / math.pi) ** 0.25 / math.sqrt(2.0 ** n * math.factorial(n))


def _pick(table, index):
    """Selects table[index[...]] elementwise; negative indices give 0."""
    out = np.zeros(table.shape[1:])
    for n in range(table.shape[0]):
        out = np.where(index == n, table[n], out)
    return out


def basis_jet(quanta, omegas, x, envelope: bool = True):
    """
    Values and gradients of several 3-d eigenfunctions sharing one frequency triplet.

    Parameters:
        quanta (array-like): Integer array of shape (T, 3), one quantum-number triplet per term.
        omegas (array-like): Frequencies (w1, w2, w3).
        x (ndarray): Points of shape (..., 3).
        envelope (bool): When False the Gaussian factor exp(-w x^2 / 2) is left out, giving
            the polynomial part whose zeros are the same as the eigenfunction's.

    Returns:
        tuple: values of shape (..., T) and gradients of shape (..., T, 3).
    """
    quanta = np.asarray(quanta, dtype=int)
    omegas = np.asarray(omegas, dtype=float)
    x = np.asarray(x, dtype=float)
    sqrt_w = np.sqrt(omegas)
    norms = np.array([[normalization(int(n), w) for n, w in zip(row, omegas)] for row in quanta])

    xs = x[..., None, :]
    u = sqrt_w * xs
    nmax = int(quanta.max())
    u_full = np.broadcast_to(u, u.shape[:-2] + quanta.shape)
    table = np.stack([hermite(k, u_full) for k in range(nmax + 1)])
    h_n = _pick(table, quanta)
    h_nm1 = _pick(table, quanta - 1)

    f = norms * h_n
    df = norms * 2.0 * quanta * sqrt_w * h_nm1
    if envelope:
        env = np.exp(-0.5 * omegas * xs ** 2)
        df = (df - omegas * xs * h_n * norms) * env
        f = f * env

    values = f[..., 0] * f[..., 1] * f[..., 2]
    grads = np.stack([
        df[..., 0] * f[..., 1] * f[..., 2],
        f[..., 0] * df[..., 1] * f[..., 2],
        f[..., 0] * f[..., 1] * df[..., 2],
    ], axis=-1)
    return values, grads


def eigenstate_value(mode: Mode3D, x, envelope: bool = True):
    """
    Evaluates the normalized eigenfunction
    prod_k (w_k/pi)^(1/4) exp(-w_k x_k^2/2) H_{n_k}(sqrt(w_k) x_k) / sqrt(2^{n_k} n_k!).

    Example:
        >>> ground = Mode3D.from_quanta((0, 0, 0), (1.0, 1.0, 1.0))
        >>> round(float(eigenstate_value(ground, np.zeros(3))), 6)
        0.423777
    """
    values, _ = basis_jet([mode.quanta], mode.omegas, x, envelope)
    return values[..., 0]


def eigenstate_gradient(mode: Mode3D, x, envelope: bool = True):
    """Analytic gradient of `eigenstate_value`, using H_n' = 2n H_{n-1}."""
    _, grads = basis_jet([mode.quanta], mode.omegas, x, envelope)
    return grads[..., 0, :]


def polynomial_jet(mode: Mode3D, x):
    """
    Value, gradient and Hessian of the envelope-free part of an eigenfunction at one point.

    Used by the perturbation series, which only ever needs ratios of these polynomials.

    Parameters:
        mode (Mode3D): The eigenstate.
        x (array-like): A single point of shape (3,).

    Returns:
        tuple: (value: float, gradient: ndarray (3,), hessian: ndarray (3, 3)).
    """
    x = np.asarray(x, dtype=float)
    f, df, d2f = np.empty(3), np.empty(3), np.empty(3)
    for k, m in enumerate(mode.modes):
        n, w = m.n, m.omega
        u = math.sqrt(w) * x[k]
        norm = normalization(n, w)
        f[k] = norm * hermite(n, u)
        df[k] = norm * 2.0 * n * math.sqrt(w) * hermite(n - 1, u) if n >= 1 else 0.0
        d2f[k] = norm * 4.0 * n * (n - 1) * w * hermite(n - 2, u) if n >= 2 else 0.0

    value = f[0] * f[1] * f[2]
    grad = np.array([df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]])
    hess = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            factors = f.copy()
            if i == j:
                factors[i] = d2f[i]
            else:
                factors[i], factors[j] = df[i], df[j]
            hess[i, j] = factors[0] * factors[1] * factors[2]
    return value, grad, hess


def energy(mode: Mode3D) -> float:
    """
    E = sum_i (n_i + 1/2) w_i.

    Example:
        >>> energy(Mode3D.from_quanta((0, 0, 0), (1.0, 1.0, 1.0)))
        1.5
    """
    return sum((m.n + 0.5) * m.omega for m in mode.modes)
