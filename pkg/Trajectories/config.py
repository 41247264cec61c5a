"""
Run configuration: one TOML file with a top-level `task` and the tables [wave], [integrator],
[scenario] and [output], validated with pydantic. Presets are the same files shipped in
Trajectories/presets/.
"""
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import toml
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, ValidationError

from .errors import ConfigError, SpecError, UnknownPreset
from .integrator import IntegratorConfig
from .wavefunction import WaveSpec

PRESET_DIR = Path(__file__).resolve().parent / 'presets'

TASKS = ('simulate', 'retrace', 'classify', 'nodal-track', 'xpoint', 'perturb', 'project', 'report')
NEEDS_SPAN = ('simulate', 'retrace', 'nodal-track', 'perturb', 'report')
NEEDS_INITIAL = ('simulate', 'retrace', 'perturb', 'report')


class WaveConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    amplitudes: List[Tuple[float, float]]
    modes: List[Tuple[int, int, int]]
    omegas: Tuple[PositiveFloat, PositiveFloat, PositiveFloat] = (1.0, math.sqrt(2.0), math.sqrt(3.0))
    normalize: bool = False

    def to_spec(self) -> WaveSpec:
        amplitudes = [complex(re, im) for re, im in self.amplitudes]
        if self.normalize:
            norm = math.sqrt(sum(abs(a) ** 2 for a in amplitudes))
            if norm == 0:
                raise SpecError('all amplitudes are zero', field='wave.amplitudes')
            amplitudes = [a / norm for a in amplitudes]
        try:
            return WaveSpec.from_numbers(amplitudes, self.modes, self.omegas)
        except SpecError as err:
            raise SpecError(str(err), field='wave') from None


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    t0: float = 0.0
    t1: Optional[float] = None
    sample_dt: Optional[PositiveFloat] = None
    initial: List[Tuple[float, float, float]] = []
    initial_sphere: List[Tuple[float, float]] = []
    radius: Optional[PositiveFloat] = None
    surface_c: Optional[float] = None
    nodal_method: Literal['closed_form', 'fplane', 'surface_newton', 'surface_ode'] = 'fplane'
    nodal_dt: PositiveFloat = 1e-2
    node_seed: Optional[Tuple[float, float, float]] = None
    order: Literal[1, 2] = 1
    chart: Optional[Literal['SPHERE_THETA_PHI', 'PEAR_S_PHI']] = None
    bins: Tuple[PositiveInt, PositiveInt] = (36, 18)
    input_csv: Optional[str] = None

    def initial_points(self) -> list:
        """Cartesian initial conditions; [phi, theta] pairs are placed on the sphere of `radius`."""
        points = [np.array(p, dtype=float) for p in self.initial]
        for phi, theta in self.initial_sphere:
            points.append(self.radius * np.array([math.sin(theta) * math.cos(phi),
                                                  math.sin(theta) * math.sin(phi),
                                                  math.cos(theta)]))
        return points


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    dir: Optional[str] = None
    prefix: str = ''


class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    task: Literal[TASKS]
    wave: WaveConfig
    integrator: IntegratorConfig = IntegratorConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    output: OutputConfig = OutputConfig()
    threads: Optional[PositiveInt] = None
    preset: Optional[str] = None

    def spec(self) -> WaveSpec:
        return self.wave.to_spec()

    def canonical(self) -> dict:
        """Config as plain data with the preset name left out, used for hashing."""
        return self.model_dump(mode='json', exclude={'preset'})


def _field_path(loc) -> str:
    return '.'.join(str(part) for part in loc) or 'config'


def _check_task(cfg: RunConfig):
    s = cfg.scenario
    if cfg.task in NEEDS_SPAN:
        if s.t1 is None:
            raise ConfigError('is required for this task', field='scenario.t1')
        if s.t1 == s.t0:
            raise ConfigError('must differ from scenario.t0', field='scenario.t1')
    if cfg.task in NEEDS_INITIAL and not (s.initial or s.initial_sphere):
        raise ConfigError('at least one initial condition is required', field='scenario.initial')
    if s.initial_sphere and s.radius is None:
        raise ConfigError('initial_sphere needs a radius', field='scenario.radius')
    if cfg.task == 'project' and s.input_csv is None:
        raise ConfigError('is required for this task', field='scenario.input_csv')
    if cfg.task == 'perturb' and len(s.initial) + len(s.initial_sphere) != 1:
        raise ConfigError('perturb takes exactly one base point', field='scenario.initial')


def parse_config(data: dict, source: str = '<config>') -> RunConfig:
    """
    Validates configuration data.

    Raises:
        ConfigError: Naming the first offending field, e.g. `wave.amplitudes`.
    """
    try:
        cfg = RunConfig.model_validate(data or {})
    except ValidationError as err:
        first = err.errors()[0]
        raise ConfigError(f'{first["msg"]} ({source})', field=_field_path(first['loc'])) from None
    _check_task(cfg)
    cfg.spec()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = toml.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f'config file {path} does not exist') from None
    except toml.TomlDecodeError as err:
        raise ConfigError(f'{err.msg} ({path})', field=f'line {err.lineno}') from None
    return parse_config(data, str(path))


def list_presets() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob('*.toml'))


def preset(name: str) -> RunConfig:
    """
    Loads a shipped preset by name.

    Example:
        >>> preset('fig9').scenario.initial
        [(1.297366, -0.262989, 0.946631)]
    """
    path = PRESET_DIR / f'{name}.toml'
    if not path.is_file():
        raise UnknownPreset(f'unknown preset {name!r}; known presets: {", ".join(list_presets())}')
    cfg = load_config(path)
    return cfg.model_copy(update={'preset': name})


def with_overrides(cfg: RunConfig, out: str = None, dt: float = None, threads: int = None,
                   task: str = None) -> RunConfig:
    """Applies command-line overrides; --dt sets both the sample and the nodal step."""
    update = {}
    if task is not None:
        if task not in TASKS:
            raise ConfigError(f'unknown task {task!r}', field='task')
        update['task'] = task
    if out is not None:
        update['output'] = cfg.output.model_copy(update={'dir': str(out)})
    if dt is not None:
        if not dt > 0:
            raise ConfigError(f'must be positive, got {dt}', field='scenario.sample_dt')
        update['scenario'] = cfg.scenario.model_copy(update={'sample_dt': dt, 'nodal_dt': dt})
    if threads is not None:
        if threads < 1:
            raise ConfigError(f'must be at least 1, got {threads}', field='threads')
        update['threads'] = threads
    new = cfg.model_copy(update=update)
    if task is not None:
        _check_task(new)
    return new
