"""
Three-term superposition Psi(x, t) = sum_j amp_j Psi_j(x) exp(-i E_j t) of harmonic-oscillator
eigenstates sharing one frequency triplet.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import Mode3D, basis_jet, energy
from .errors import SpecError


@dataclass(frozen=True)
class WaveSpec:
    amplitudes: tuple
    modes: tuple
    omegas: tuple
    _amps: np.ndarray = field(init=False, repr=False, compare=False)
    _quanta: np.ndarray = field(init=False, repr=False, compare=False)
    _energies: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.amplitudes) != 3 or len(self.modes) != 3:
            raise SpecError('a wave spec holds exactly three (amplitude, mode) terms')
        omegas = tuple(float(w) for w in self.omegas)
        if len(omegas) != 3:
            raise SpecError('omegas must be a triplet')
        amplitudes = tuple(complex(a) for a in self.amplitudes)
        norm = sum(abs(a) ** 2 for a in amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise SpecError(f'|a|^2+|b|^2+|c|^2 must equal 1, got {norm:.15f}')
        for mode in self.modes:
            if not all(math.isclose(w, v, rel_tol=1e-12) for w, v in zip(mode.omegas, omegas)):
                raise SpecError(f'mode {mode.quanta} does not share the frequency triplet {omegas}')
        object.__setattr__(self, 'amplitudes', amplitudes)
        object.__setattr__(self, 'modes', tuple(self.modes))
        object.__setattr__(self, 'omegas', omegas)
        object.__setattr__(self, '_amps', np.array(amplitudes, dtype=complex))
        object.__setattr__(self, '_quanta', np.array([m.quanta for m in self.modes], dtype=int))
        object.__setattr__(self, '_energies', np.array([energy(m) for m in self.modes]))

    @classmethod
    def from_numbers(cls, amplitudes, quanta, omegas) -> 'WaveSpec':
        """
        Builds a WaveSpec from plain numbers.

        Example:
            >>> s = 1 / 3 ** 0.5
            >>> spec = WaveSpec.from_numbers([s, s, s], [(1, 0, 0), (0, 1, 0), (0, 0, 1)], (1.0, 2 ** 0.5, 3 ** 0.5))
        """
        modes = tuple(Mode3D.from_quanta(q, omegas) for q in quanta)
        return cls(tuple(amplitudes), modes, tuple(omegas))

    @property
    def quanta(self) -> tuple:
        return tuple(m.quanta for m in self.modes)

    @property
    def energies(self) -> tuple:
        return tuple(float(e) for e in self._energies)

    def with_amplitudes(self, amplitudes) -> 'WaveSpec':
        return WaveSpec(tuple(amplitudes), self.modes, self.omegas)

    def to_dict(self) -> dict:
        return {
            'amplitudes': [[a.real, a.imag] for a in self.amplitudes],
            'modes': [list(q) for q in self.quanta],
            'omegas': list(self.omegas),
        }


@dataclass(frozen=True)
class WaveSample:
    psi_re: float
    psi_im: float
    grad_re: np.ndarray
    grad_im: np.ndarray
    g: float


def _psi_and_grad(spec: WaveSpec, x, t: float, envelope: bool):
    values, grads = basis_jet(spec._quanta, spec.omegas, x, envelope)
    phases = spec._amps * np.exp(-1j * spec._energies * t)
    psi = values @ phases
    grad = np.einsum('...tk,t->...k', grads, phases)
    return psi, grad


def sample(spec: WaveSpec, x, t: float, envelope: bool = True) -> WaveSample:
    """
    Evaluates Psi(x, t), its real/imaginary parts, their spatial gradients and G = Psi_R^2 + Psi_I^2.

    Parameters:
        spec (WaveSpec): The superposition.
        x (array-like): A point of shape (3,) or points of shape (..., 3).
        t (float): Time.
        envelope (bool): When False, the common Gaussian factor is dropped; nodes are unchanged.

    Returns:
        WaveSample: Scalars for a single point, arrays for a grid of points.
    """
    x = np.asarray(x, dtype=float)
    psi, grad = _psi_and_grad(spec, x, t, envelope)
    psi_re, psi_im = psi.real, psi.imag
    g = psi_re * psi_re + psi_im * psi_im
    if x.ndim == 1:
        psi_re, psi_im, g = float(psi_re), float(psi_im), float(g)
    return WaveSample(psi_re, psi_im, grad.real, grad.imag, g)


def node_residual(spec: WaveSpec, x, t: float, envelope: bool = True):
    """Returns (Psi_R, Psi_I); a nodal point has both equal to zero."""
    s = sample(spec, x, t, envelope)
    return s.psi_re, s.psi_im


def time_derivative(spec: WaveSpec, x, t: float, envelope: bool = True):
    """
    Partial time derivative of Psi at fixed x, returned as (d Psi_R/dt, d Psi_I/dt).
    """
    values, _ = basis_jet(spec._quanta, spec.omegas, np.asarray(x, dtype=float), envelope)
    rates = -1j * spec._energies * spec._amps * np.exp(-1j * spec._energies * t)
    dpsi = values @ rates
    if np.ndim(dpsi) == 0:
        return float(dpsi.real), float(dpsi.imag)
    return dpsi.real, dpsi.imag
