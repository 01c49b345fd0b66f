import csv
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from koopman_ctl import exceptions
from koopman_ctl.const import ARTIFACT_LOG, INPUT_DIM
from koopman_ctl.hdmd import LiftedModel, LinearPredictor
from koopman_ctl.observables import ObservableDictionary
from koopman_ctl.reduce import ReducedModel
from koopman_ctl.surrogate.plant import Trajectory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MANIFEST_NAME = 'manifest.json'
MODEL_FORMAT = 'koopman-ctl/model/1'


def fingerprint(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write(path: PathLike, text: str) -> str:
    """Writes through a temporary file in the target directory and renames it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

    digest = hashlib.sha256(text.encode('utf8')).hexdigest()
    logger.debug(ARTIFACT_LOG.format(path=path, digest=digest))
    return digest


def format_float(value: float) -> str:
    """Shortest text that reads back to the same double, the form json writes for model files."""
    return repr(float(value))


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [','.join(header)]
    lines.extend(','.join(_cell(v) for v in row) for row in rows)
    return atomic_write(path, '\n'.join(lines) + '\n')


def read_table(path: PathLike, expected_header: Optional[Sequence[str]] = None) -> List[List[str]]:
    with open(path, newline='', encoding='utf8') as f:
        rows = list(csv.reader(f))
    if not rows:
        raise exceptions.ArtifactParseError(str(path), 1, 'empty file')
    if expected_header is not None and rows[0][:len(expected_header)] != list(expected_header):
        raise exceptions.ArtifactParseError(str(path), 1, f'expected header starting with {",".join(expected_header)}')
    return rows


def _floats(path: PathLike, rows: List[List[str]], width: int) -> np.ndarray:
    values = np.empty((len(rows) - 1, width))
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise exceptions.ArtifactParseError(str(path), line, f'expected {width} columns, got {len(row)}')
        try:
            values[line - 2] = [float(v) for v in row]
        except ValueError as err:
            raise exceptions.ArtifactParseError(str(path), line, str(err)) from err
    return values


def input_header(channels: int = INPUT_DIM, exhaust: bool = False) -> List[str]:
    header = ['t'] + [f'u{i}' for i in range(1, channels + 1)]
    if exhaust:
        header += [f'v{i}' for i in range(1, channels + 1)]
    return header


def write_trajectory(path: PathLike, trajectory: Trajectory) -> str:
    """``t,u1,u2,u3,x1..x45``; a final state without an applied input gets ``nan`` inputs."""
    channels = trajectory.inputs.shape[1] if trajectory.inputs.size else INPUT_DIM
    header = input_header(channels) + [f'x{i}' for i in range(1, trajectory.states.shape[1] + 1)]
    inputs = np.full((len(trajectory), channels), np.nan)
    inputs[:len(trajectory.inputs)] = trajectory.inputs
    rows = (np.concatenate([[t], u, x]) for t, u, x in zip(trajectory.times, inputs, trajectory.states))
    return write_table(path, header, rows)


def read_trajectory(path: PathLike, sample_dt: Optional[float] = None, channels: int = INPUT_DIM) -> Trajectory:
    rows = read_table(path, input_header(channels))
    width = len(rows[0])
    values = _floats(path, rows, width)
    if len(values) == 0:
        raise exceptions.ArtifactParseError(str(path), 2, 'trajectory has no samples')

    inputs = values[:, 1:1 + channels]
    pending = np.isnan(inputs).any(axis=1)
    if pending[:-1].any():
        raise exceptions.ArtifactParseError(str(path), int(np.argmax(pending)) + 2, 'missing input before the last row')
    if sample_dt is None:
        sample_dt = float(values[1, 0] - values[0, 0]) if len(values) > 1 else 0.0
    start_index = int(round(values[0, 0] / sample_dt)) if sample_dt > 0 else 0
    return Trajectory(sample_dt=sample_dt, states=values[:, 1 + channels:],
                      inputs=inputs[:len(inputs) - int(pending[-1])], start_index=start_index)


def write_inputs(path: PathLike, times: np.ndarray, inputs: np.ndarray, exhaust: Optional[np.ndarray] = None) -> str:
    """Signal and plan files: ``t,u1,u2,u3[,v1,v2,v3]``."""
    columns = [np.asarray(times)[:, None], inputs] + ([exhaust] if exhaust is not None else [])
    header = input_header(inputs.shape[1], exhaust is not None)
    return write_table(path, header, np.hstack(columns))


def read_inputs(path: PathLike, channels: int = INPUT_DIM) -> np.ndarray:
    rows = read_table(path, input_header(channels))
    return _floats(path, rows, len(rows[0]))[:, 1:1 + channels]


def _matrix(M: np.ndarray) -> dict:
    M = np.asarray(M)
    return {'shape': list(M.shape), 'data': M.reshape(-1).tolist()}


def _complex_matrix(M: np.ndarray) -> dict:
    return {'real': _matrix(M.real), 'imag': _matrix(M.imag)}


def _from_matrix(entry: dict) -> np.ndarray:
    return np.asarray(entry['data'], dtype=float).reshape(entry['shape'])


def _from_complex(entry: dict) -> np.ndarray:
    return _from_matrix(entry['real']) + 1j * _from_matrix(entry['imag'])


def model_to_dict(model: LinearPredictor, inputs: Optional[Dict[str, str]] = None) -> dict:
    data = {
        'format': MODEL_FORMAT,
        'dims': {'state': model.C.shape[0], 'model': model.dim, 'input': model.input_dim},
        'dictionary': model.dictionary.to_dict(),
        'sample_dt': model.sample_dt,
        'A': _matrix(model.A),
        'B': _matrix(model.B),
        'C': _matrix(model.C),
        'fingerprint': model.fingerprint,
        'inputs': dict(sorted((inputs or {}).items())),
    }
    if isinstance(model, LiftedModel):
        data['training'] = {'snapshots': model.training_snapshots, 'fingerprint': model.training_fingerprint}
    if isinstance(model, ReducedModel):
        data['reduced'] = {
            'kept_indices': list(model.kept_indices),
            'cumulative_power': model.cumulative_power,
            'parent': model.parent,
            'realifier': [list(r) for r in model.realifier],
            'eigenvalues': {'real': model.eigenvalues.real.tolist(), 'imag': model.eigenvalues.imag.tolist()},
            'basis': _complex_matrix(model.basis),
            'real_basis': _matrix(model.real_basis),
            'encoder': _matrix(model.encoder),
        }
    return data


def model_from_dict(data: dict) -> LinearPredictor:
    if data.get('format') != MODEL_FORMAT:
        raise exceptions.ConfigError(f'unsupported model format {data.get("format")!r}')

    dictionary = ObservableDictionary(**data['dictionary'])
    A, B, C = _from_matrix(data['A']), _from_matrix(data['B']), _from_matrix(data['C'])
    if 'reduced' not in data:
        training = data.get('training', {})
        return LiftedModel(A=A, B=B, C=C, dictionary=dictionary, sample_dt=data['sample_dt'],
                           training_snapshots=training.get('snapshots', 0),
                           training_fingerprint=training.get('fingerprint'))

    reduced = data['reduced']
    eigenvalues = np.asarray(reduced['eigenvalues']['real']) + 1j * np.asarray(reduced['eigenvalues']['imag'])
    return ReducedModel(A=A, B=B, C=C,
                        basis=_from_complex(reduced['basis']),
                        real_basis=_from_matrix(reduced['real_basis']),
                        encoder=_from_matrix(reduced['encoder']),
                        realifier=tuple((int(i), str(p), int(j)) for i, p, j in reduced['realifier']),
                        kept_indices=tuple(reduced['kept_indices']),
                        eigenvalues=eigenvalues,
                        cumulative_power=reduced['cumulative_power'],
                        parent=reduced['parent'],
                        dictionary=dictionary,
                        sample_dt=data['sample_dt'])


def save_model(path: PathLike, model: LinearPredictor, inputs: Optional[Dict[str, str]] = None) -> str:
    return atomic_write(path, json.dumps(model_to_dict(model, inputs), indent=1) + '\n')


def load_model(path: PathLike) -> LinearPredictor:
    try:
        with open(path, encoding='utf8') as f:
            data = json.load(f)
    except json.JSONDecodeError as err:
        raise exceptions.ArtifactParseError(str(path), err.lineno, err.msg) from err
    return model_from_dict(data)


class Manifest:
    """
    Content hashes of every artifact in an output directory and of the inputs it was built
    from. Paths are stored relative to the directory.
    """

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.path = self.root / MANIFEST_NAME
        self.entries: Dict[str, dict] = {}
        if self.path.exists():
            try:
                self.entries = json.loads(self.path.read_text(encoding='utf8'))
            except json.JSONDecodeError as err:
                raise exceptions.ArtifactParseError(str(self.path), err.lineno, err.msg) from err

    def key(self, path: PathLike) -> str:
        return Path(path).resolve().relative_to(self.root.resolve()).as_posix()

    def record(self, path: PathLike, digest: str, inputs: Sequence[PathLike] = ()) -> None:
        self.entries[self.key(path)] = {
            'sha256': digest,
            'inputs': {self.key(p): fingerprint(p) for p in inputs},
        }
        atomic_write(self.path, json.dumps(dict(sorted(self.entries.items())), indent=1) + '\n')

    def verify(self, path: PathLike) -> str:
        """Current hash of ``path`` after checking it and its recorded inputs are unchanged."""
        key = self.key(path)
        if not Path(path).exists():
            raise FileNotFoundError(f'missing artifact {path}')
        entry = self.entries.get(key)
        if entry is None:
            raise exceptions.StaleArtifact(f'{key} is not recorded in {self.path}')

        digest = fingerprint(path)
        if digest != entry['sha256']:
            raise exceptions.StaleArtifact(f'{key} changed after it was written')
        for name, recorded in entry['inputs'].items():
            source = self.root / name
            if not source.exists() or fingerprint(source) != recorded:
                raise exceptions.StaleArtifact(f'{key} was built from a different {name}')
        return digest
