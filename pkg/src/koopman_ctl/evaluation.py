import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from koopman_ctl import exceptions
from koopman_ctl.const import DEFAULT_RCOND, MONOMIAL_SCALE, SWEEP_CELL_LOG, THREADS_ENV
from koopman_ctl.hdmd import LinearPredictor, fit
from koopman_ctl.observables import LiftedSnapshotSet, ObservableDictionary, lift, lift_point, projection_matrix
from koopman_ctl.surrogate.plant import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """Single-step relative errors e_i and their RMS over N scored verification samples."""
    errors: np.ndarray
    e_rms: float
    excluded: int
    verification_samples: int
    training_snapshots: int
    fingerprint: Optional[str] = None
    axes: Dict[str, object] = field(default_factory=dict)

    def to_row(self) -> dict:
        return {**self.axes, 'e_rms': self.e_rms, 'samples': self.training_snapshots,
                'verification': self.verification_samples, 'excluded': self.excluded}


@dataclass(frozen=True)
class SweepCell:
    order: int
    samples: int
    e_rms: float
    status: str


def _training_snapshots(model: LinearPredictor) -> int:
    return int(getattr(model, 'training_snapshots', 0))


def single_step_error(model: LinearPredictor, verification: LiftedSnapshotSet,
                      axes: Optional[Dict[str, object]] = None) -> EvaluationReport:
    """
    e_i = ||x+_predict - x+_actual|| / ||x+_actual - x_i|| over the verification columns, with
    stationary samples (zero denominator) excluded and counted.
    """
    if verification.dictionary != model.dictionary:
        raise exceptions.InvalidSpec('verification data was lifted with a different dictionary')

    C = projection_matrix(verification.dictionary)
    x_now = C @ verification.X
    x_next = C @ verification.X_plus
    x_predicted = model.C @ model.predict(model.encode(verification.X), verification.U)

    numerator = np.linalg.norm(x_predicted - x_next, axis=0)
    denominator = np.linalg.norm(x_next - x_now, axis=0)
    scored = denominator > 0
    excluded = int(np.count_nonzero(~scored))
    if excluded:
        logger.warning('excluded %d stationary verification samples from e_rms', excluded)

    errors = numerator[scored] / denominator[scored]
    e_rms = float(np.sqrt(np.mean(errors ** 2))) if errors.size else float('nan')
    return EvaluationReport(errors=errors, e_rms=e_rms, excluded=excluded, verification_samples=int(errors.size),
                            training_snapshots=_training_snapshots(model),
                            fingerprint=getattr(model, 'fingerprint', None), axes=dict(axes or {}))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    predicted: np.ndarray
    errors: np.ndarray
    errors_m: np.ndarray

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean())


def rollout_reconstruction(model: LinearPredictor, initial_history, inputs, actual: Trajectory) -> Reconstruction:
    """
    Iterates the model from the lifted initial history under the known inputs and compares with
    ``actual``. Relative errors are normalized by the RMS deviation of the actual states about
    their mean; a motionless reference leaves the errors in meters.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, model.input_dim)
    if len(inputs) != len(actual) - 1:
        raise exceptions.InvalidSpec(f'{len(inputs)} inputs do not drive {len(actual)} actual samples')

    z0 = model.encode(lift_point(initial_history, model.dictionary))
    predicted = model.rollout(z0, inputs)
    errors_m = np.linalg.norm(predicted - actual.states, axis=1)
    deviation = actual.states - actual.states.mean(axis=0)
    amplitude = np.sqrt(np.mean(np.sum(deviation ** 2, axis=1)))
    errors = errors_m / amplitude if amplitude > 0 else errors_m
    return Reconstruction(predicted=predicted, errors=errors, errors_m=errors_m)


def _run_cell(training: Sequence[Trajectory], verification: Sequence[Trajectory], kind: str, order: int,
              samples: int, rcond: float, monomial_scale: float) -> SweepCell:
    try:
        scale = monomial_scale if kind == 'monomial' else 1.0
        dictionary = ObservableDictionary(kind, order, training[0].states.shape[1], scale)
        remaining, pieces = samples, []
        for trajectory in training:
            if remaining <= 0:
                break
            piece = lift(trajectory.window(0, remaining + dictionary.history), dictionary)
            pieces.append(piece)
            remaining -= piece.snapshot_count
        if remaining > 0:
            raise exceptions.InsufficientData(f'{samples} training snapshots requested, {samples - remaining} available')

        model = fit(LiftedSnapshotSet.concat(pieces), rcond)
        scored = LiftedSnapshotSet.concat([lift(t, dictionary) for t in verification])
        cell = SweepCell(order, samples, single_step_error(model, scored).e_rms, 'ok')
    except exceptions.KoopmanCtlError as err:
        cell = SweepCell(order, samples, float('nan'), type(err).__name__)

    logger.debug(SWEEP_CELL_LOG.format(kind=kind, order=order, samples=samples, status=cell.status, e_rms=cell.e_rms))
    return cell


def sweep_threads() -> int:
    value = os.getenv(THREADS_ENV)
    if not value:
        return -1
    try:
        return max(1, int(value))
    except ValueError as err:
        raise exceptions.ConfigError(f'{THREADS_ENV} must be an integer, got {value!r}') from err


def convergence_sweep(training: Sequence[Trajectory], verification: Sequence[Trajectory], kind: str,
                      orders: Sequence[int], sample_counts: Sequence[int],
                      rcond: float = DEFAULT_RCOND, n_jobs: Optional[int] = None,
                      monomial_scale: float = MONOMIAL_SCALE) -> List[SweepCell]:
    """
    One fit and one single-step evaluation per (order, sample count) cell, rows ordered by
    order then sample count whatever the completion order.

    :param training: Training trajectories; the first ``samples`` snapshots are used.
    :param verification: Held-out trajectories.
    :param n_jobs: joblib worker threads, ``KOOPMAN_CTL_THREADS`` (or all cores) when omitted.
    :param monomial_scale: Length unit per meter the monomial powers are formed in.
    """
    if isinstance(training, Trajectory):
        training = [training]
    if isinstance(verification, Trajectory):
        verification = [verification]

    grid = [(order, samples) for order in orders for samples in sample_counts]
    jobs = sweep_threads() if n_jobs is None else n_jobs
    return Parallel(n_jobs=jobs, prefer='threads')(
        delayed(_run_cell)(training, verification, kind, order, samples, rcond, monomial_scale)
        for order, samples in grid)


@dataclass(frozen=True, eq=False)
class PoseCurve:
    times: np.ndarray
    errors: np.ndarray
    errors_m: np.ndarray

    def steady_state(self, tail: float = 0.2) -> float:
        """Mean normalized error over the final ``tail`` fraction of the curve."""
        count = max(1, int(round(len(self.errors) * tail)))
        return float(self.errors[-count:].mean())


def pose_error_curve(actual: Trajectory, x_ref, x0) -> PoseCurve:
    """e(t) = ||x(t) - x_ref|| / ||x0 - x_ref||, alongside the raw distance in meters."""
    if len(actual) == 0:
        raise exceptions.InsufficientData('pose error of an empty trajectory')
    x_ref, x0 = np.asarray(x_ref, dtype=float), np.asarray(x0, dtype=float)
    scale = np.linalg.norm(x0 - x_ref)
    if scale == 0:
        raise exceptions.InvalidReference('initial pose equals the reference pose')

    errors_m = np.linalg.norm(actual.states - x_ref, axis=1)
    return PoseCurve(times=actual.times - actual.times[0], errors=errors_m / scale, errors_m=errors_m)


def split_disjoint(training: LiftedSnapshotSet, verification: LiftedSnapshotSet) -> bool:
    return not np.intersect1d(training.times, verification.times).size
