import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from koopman_ctl import exceptions
from koopman_ctl.const import MAX_DELAY_ORDER, MAX_MONOMIAL_ORDER, STATE_DIM
from koopman_ctl.surrogate.plant import Trajectory

logger = logging.getLogger(__name__)

DICTIONARY_KINDS = ('delay', 'monomial')


@dataclass(frozen=True)
class ObservableDictionary:
    """
    Lifting map z = f(x).

    ``delay`` with order d stacks x_k, x_{k-1}, ..., x_{k-d} (newest first).
    ``monomial`` with order i stacks the element-wise powers y, y^2, ..., y^i of y = s x, where
    ``monomial_scale`` s converts meters into the length unit the powers are formed in.
    """
    kind: str = 'delay'
    order: int = 10
    state_dim: int = STATE_DIM
    monomial_scale: float = 1.0

    def __post_init__(self):
        if self.kind == 'delay':
            if not 0 <= self.order <= MAX_DELAY_ORDER:
                raise exceptions.InvalidSpec(f'delay order must lie in [0, {MAX_DELAY_ORDER}], got {self.order}')
        elif self.kind == 'monomial':
            if not 1 <= self.order <= MAX_MONOMIAL_ORDER:
                raise exceptions.InvalidSpec(
                    f'monomial order must lie in [1, {MAX_MONOMIAL_ORDER}], got {self.order}')
        else:
            raise exceptions.InvalidSpec(f'unknown dictionary kind {self.kind!r}, expected one of {DICTIONARY_KINDS}')
        if self.state_dim < 1:
            raise exceptions.InvalidSpec(f'state_dim must be positive, got {self.state_dim}')
        if not (np.isfinite(self.monomial_scale) and self.monomial_scale > 0):
            raise exceptions.InvalidSpec(f'monomial_scale must be positive, got {self.monomial_scale}')

    @property
    def blocks(self) -> int:
        return self.order + 1 if self.kind == 'delay' else self.order

    @property
    def lifted_dim(self) -> int:
        return self.state_dim * self.blocks

    @property
    def history(self) -> int:
        """Number of consecutive samples one lifted vector depends on."""
        return self.order + 1 if self.kind == 'delay' else 1

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'order': self.order, 'state_dim': self.state_dim,
                'monomial_scale': self.monomial_scale}


@dataclass(frozen=True, eq=False)
class LiftedSnapshotSet:
    """
    Column k of ``X_plus`` is the one-step successor of column k of ``X`` under input column k
    of ``U``. ``times`` holds the absolute sample index of every ``X`` column.
    """
    X: np.ndarray
    X_plus: np.ndarray
    U: np.ndarray
    dictionary: ObservableDictionary
    sample_dt: float
    times: np.ndarray

    def __post_init__(self):
        count = self.X.shape[1]
        if self.X_plus.shape[1] != count or self.U.shape[1] != count or len(self.times) != count:
            raise exceptions.InvalidSpec('lifted snapshot columns are not aligned')
        if self.X.shape[0] != self.dictionary.lifted_dim or self.X_plus.shape[0] != self.dictionary.lifted_dim:
            raise exceptions.InvalidSpec(f'lifted rows {self.X.shape[0]} != lifted_dim {self.dictionary.lifted_dim}')

    @property
    def snapshot_count(self) -> int:
        return self.X.shape[1]

    @property
    def input_dim(self) -> int:
        return self.U.shape[0]

    def columns(self, index) -> 'LiftedSnapshotSet':
        return LiftedSnapshotSet(X=self.X[:, index], X_plus=self.X_plus[:, index], U=self.U[:, index],
                                 dictionary=self.dictionary, sample_dt=self.sample_dt, times=self.times[index])

    @classmethod
    def concat(cls, sets: Sequence['LiftedSnapshotSet']) -> 'LiftedSnapshotSet':
        """Joins sets lifted from separate trajectories; no pair spans two trajectories."""
        if not sets:
            raise exceptions.InsufficientData('no snapshot sets to concatenate')
        first = sets[0]
        if any(s.dictionary != first.dictionary or s.input_dim != first.input_dim for s in sets):
            raise exceptions.InvalidSpec('cannot concatenate snapshot sets with different dictionaries')
        return cls(X=np.hstack([s.X for s in sets]),
                   X_plus=np.hstack([s.X_plus for s in sets]),
                   U=np.hstack([s.U for s in sets]),
                   dictionary=first.dictionary,
                   sample_dt=first.sample_dt,
                   times=np.concatenate([s.times for s in sets]))


def _check_state_dim(trajectory: Trajectory, dictionary: ObservableDictionary) -> None:
    if trajectory.states.shape[1] != dictionary.state_dim:
        raise exceptions.InvalidSpec(f'trajectory state dim {trajectory.states.shape[1]} '
                                     f'!= dictionary state_dim {dictionary.state_dim}')


def _hankel(states: np.ndarray, d: int) -> np.ndarray:
    """Columns z_k = [x_k; x_{k-1}; ...; x_{k-d}] for k = d .. T-1."""
    T = len(states)
    return np.vstack([states[d - j:T - j].T for j in range(d + 1)])


def _powers(states: np.ndarray, order: int, scale: float = 1.0, offset: int = 0) -> np.ndarray:
    with np.errstate(over='ignore', invalid='ignore'):
        Y = scale * states.T
        Z = np.vstack([Y ** p for p in range(1, order + 1)])
    finite = np.all(np.isfinite(Z), axis=0)
    if not np.all(finite):
        raise exceptions.LiftOverflow(offset + int(np.argmin(finite)), order)
    return Z


def delay_lift(trajectory: Trajectory, d: int) -> LiftedSnapshotSet:
    """
    Hankel snapshot matrices with ``d`` delays: len(trajectory) - d - 1 pairs.

    :param trajectory: Observed states and inputs.
    :param d: Number of delays.
    """
    dictionary = ObservableDictionary('delay', d, trajectory.states.shape[1])
    T = len(trajectory.states)
    if T < d + 2:
        raise exceptions.InsufficientData(f'delay lift of order {d} needs at least {d + 2} samples, got {T}')
    if len(trajectory.inputs) < T - 1:
        raise exceptions.InsufficientData(f'{len(trajectory.inputs)} inputs cannot drive {T} samples')

    H = _hankel(trajectory.states, d)
    return LiftedSnapshotSet(X=H[:, :-1], X_plus=H[:, 1:], U=trajectory.inputs[d:T - 1].T,
                             dictionary=dictionary, sample_dt=trajectory.sample_dt,
                             times=trajectory.start_index + np.arange(d, T - 1))


def monomial_lift(trajectory: Trajectory, max_order: int, scale: float = 1.0) -> LiftedSnapshotSet:
    """
    Element-wise power lift [y; y^2; ...; y^i] of y = scale * x: len(trajectory) - 1 pairs.

    No rescaling happens between the powers, so with ``scale`` = 1000 (millimeters) the higher
    blocks dominate the snapshot matrix and the fit inherits their conditioning.
    """
    dictionary = ObservableDictionary('monomial', max_order, trajectory.states.shape[1], scale)
    T = len(trajectory.states)
    if T < 2:
        raise exceptions.InsufficientData(f'monomial lift needs at least 2 samples, got {T}')
    if len(trajectory.inputs) < T - 1:
        raise exceptions.InsufficientData(f'{len(trajectory.inputs)} inputs cannot drive {T} samples')

    Z = _powers(trajectory.states, max_order, scale, trajectory.start_index)
    return LiftedSnapshotSet(X=Z[:, :-1], X_plus=Z[:, 1:], U=trajectory.inputs[:T - 1].T,
                             dictionary=dictionary, sample_dt=trajectory.sample_dt,
                             times=trajectory.start_index + np.arange(T - 1))


def lift(trajectory: Trajectory, dictionary: ObservableDictionary) -> LiftedSnapshotSet:
    _check_state_dim(trajectory, dictionary)
    if dictionary.kind == 'delay':
        return delay_lift(trajectory, dictionary.order)

    return monomial_lift(trajectory, dictionary.order, dictionary.monomial_scale)


def lift_point(history, dictionary: ObservableDictionary) -> np.ndarray:
    """
    Lifted vector of the newest sample of ``history`` (chronological, oldest first).
    """
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if len(history) < dictionary.history:
        raise exceptions.InsufficientData(f'{dictionary.kind} lift needs {dictionary.history} samples of history, '
                                          f'got {len(history)}')
    if history.shape[1] != dictionary.state_dim:
        raise exceptions.InvalidSpec(f'history state dim {history.shape[1]} != {dictionary.state_dim}')

    if dictionary.kind == 'delay':
        return history[::-1][:dictionary.order + 1].reshape(-1)

    return _powers(history[-1:], dictionary.order, dictionary.monomial_scale)[:, 0]


def projection_matrix(dictionary: ObservableDictionary) -> np.ndarray:
    """
    C = [I 0 ... 0] picking the current sample (delay) or the linear block (monomial), the
    latter divided by ``monomial_scale`` so C z is in meters.
    """
    C = np.eye(dictionary.state_dim, dictionary.lifted_dim)
    if dictionary.kind == 'monomial':
        C /= dictionary.monomial_scale
    return C


def split_trajectory(trajectory: Trajectory, fraction: float = 0.5) -> Tuple[Trajectory, Trajectory]:
    """Leading ``fraction`` of the samples for training, the rest for verification."""
    if not 0 < fraction < 1:
        raise exceptions.InvalidSpec(f'split fraction must lie in (0, 1), got {fraction}')
    cut = int(round(len(trajectory) * fraction))
    return trajectory.window(0, cut), trajectory.window(cut)
