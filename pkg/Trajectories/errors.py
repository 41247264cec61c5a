"""
Exceptions raised by the Trajectories app.

Every failure carries an `exit_code` so the `bohm` management command can map it to
the process status: 2 for configuration problems, 3 for numerical failures.
"""


class BohmError(Exception):
    exit_code = 3


class ConfigError(BohmError):
    exit_code = 2

    def __init__(self, message: str, field: str = None):
        self.field = field
        if field:
            message = f'{field}: {message}'
        super().__init__(message)


class UnknownPreset(ConfigError):
    pass


class SpecError(ConfigError):
    pass


class NodeProximity(BohmError):
    def __init__(self, x, t, g):
        self.x, self.t, self.g = x, t, g
        super().__init__(f'G={g:.3e} at t={t:.6f} is at or below the node floor')


class TrackUnavailable(BohmError):
    pass


class StepUnderflow(BohmError):
    def __init__(self, t, state, min_g_seen):
        self.t, self.state, self.min_g_seen = t, state, min_g_seen
        super().__init__(f'step size fell below h_min at t={t:.9f} (min G seen {min_g_seen:.3e})')


class MaxSteps(BohmError):
    pass


class DomainError(BohmError):
    pass


class NoSurface(BohmError):
    pass


class OffSurface(BohmError):
    pass


class OutOfRange(BohmError):
    pass


class UnsupportedSurface(BohmError):
    pass


class Indeterminate(BohmError):
    pass


class NoConvergence(BohmError):
    pass


class LostTrack(BohmError):
    pass


class NewtonDiverged(BohmError):
    pass


class NotFound(BohmError):
    pass


class Degenerate(BohmError):
    pass


class SmallDivisor(BohmError):
    pass


class SecularTerm(BohmError):
    def __init__(self, harmonics, frequency):
        self.harmonics, self.frequency = harmonics, frequency
        super().__init__(f'resonant combination {harmonics} (frequency {frequency:.3e}) gives a secular term')


class EliminationFailed(BohmError):
    pass


class SpanMismatch(BohmError):
    pass


class LargeVelocity(UserWarning):
    pass
