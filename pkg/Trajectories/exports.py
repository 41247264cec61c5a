"""
Writers for run artifacts: CSV tables through pandas, JSON reports and the run manifest.
"""
import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import django
import numpy as np
import pandas as pd
import pydantic
import scipy

from .errors import ConfigError, DomainError

FLOAT_FORMAT = '%.17g'
TRAJECTORY_COLUMNS = ('t', 'x', 'y', 'z')


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f'{type(obj).__name__} is not JSON serializable')


def _nan_to_none(obj):
    # JSON has no NaN; an undefined value becomes null
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


def to_json(data) -> str:
    return json.dumps(_nan_to_none(json.loads(json.dumps(data, default=_default))), indent=2, sort_keys=True)


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(to_json(data) + '\n')
    return path


def write_frame(path, frame: pd.DataFrame) -> Path:
    """
    Writes a table with full float precision so identical runs give identical files.

    Example:
        >>> write_frame(out / 'trajectory.csv', traj.to_frame())
    """
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def write_trajectory(path, traj, spec=None, config: dict = None, meta: dict = None) -> Path:
    """
    Trajectory CSV plus a `<name>.meta.json` sidecar.

    The sidecar holds the wave spec, the run config, step counts, min G, the integrator's
    error flags and anything passed in `meta`.
    """
    path = write_frame(path, traj.to_frame())
    sidecar = {
        'spec': spec.to_dict() if spec is not None else None,
        'config': config,
        'steps_accepted': traj.steps_accepted,
        'steps_rejected': traj.steps_rejected,
        'min_g_seen': traj.min_g_seen,
        'samples': len(traj),
        'flags': {},
    }
    sidecar.update(traj.meta)
    sidecar.update(meta or {})
    write_json(path.with_suffix('.meta.json'), sidecar)
    return path


def read_trajectory_csv(path):
    """
    Reads the t, x, y, z columns of a trajectory CSV.

    Returns:
        tuple: (times, points) arrays.

    Raises:
        ConfigError: If the file is missing or lacks a column.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'{path} does not exist', field='scenario.input_csv')
    frame = pd.read_csv(path)
    missing = [c for c in TRAJECTORY_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError(f'{path} lacks columns {missing}', field='scenario.input_csv')
    if frame.empty:
        raise DomainError(f'read_trajectory_csv(): {path} holds no samples')
    return frame['t'].to_numpy(dtype=float), frame[['x', 'y', 'z']].to_numpy(dtype=float)


def config_hash(canonical: dict) -> str:
    payload = json.dumps(canonical, sort_keys=True, separators=(',', ':'), default=_default)
    return hashlib.sha256(payload.encode()).hexdigest()


def versions() -> dict:
    return {
        'python': platform.python_version(),
        'django': django.get_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'pydantic': pydantic.VERSION,
    }


def write_manifest(out_dir, task: str, canonical: dict, started: datetime, finished: datetime,
                   artifacts: list, preset: str = None, status: str = 'ok') -> Path:
    manifest = {
        'task': task,
        'preset': preset,
        'status': status,
        'config': canonical,
        'config_sha256': config_hash(canonical),
        'versions': versions(),
        'started_at': started.astimezone(timezone.utc).isoformat(),
        'finished_at': finished.astimezone(timezone.utc).isoformat(),
        'duration_s': (finished - started).total_seconds(),
        'artifacts': sorted(Path(a).name for a in artifacts),
    }
    path = write_json(Path(out_dir) / 'manifest.json', manifest)
    logging.info(f'write_manifest(): {len(artifacts)} artifacts in {out_dir}')
    return path
