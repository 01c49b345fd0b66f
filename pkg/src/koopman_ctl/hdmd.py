import hashlib
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from koopman_ctl import exceptions
from koopman_ctl.const import DEFAULT_RCOND, EIG_CONDITION_CAP, FIT_LOG
from koopman_ctl.numerics import conjugate_partners, eig_biorthonormal, pseudoinverse
from koopman_ctl.observables import LiftedSnapshotSet, ObservableDictionary, projection_matrix

logger = logging.getLogger(__name__)


def matrix_fingerprint(*matrices: np.ndarray) -> str:
    digest = hashlib.sha256()
    for M in matrices:
        M = np.ascontiguousarray(M, dtype=float)
        digest.update(str(M.shape).encode())
        digest.update(M.tobytes())
    return digest.hexdigest()


class LinearPredictor:
    """z+ = A z + B u, x = C z on coordinates produced by ``encode`` from lifted vectors."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dictionary: ObservableDictionary
    sample_dt: float

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    def encode(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float)

    def predict(self, Z: np.ndarray, U: np.ndarray) -> np.ndarray:
        """One-step prediction of the model coordinates for every column."""
        return self.A @ Z + self.B @ U

    def rollout(self, z0: np.ndarray, inputs) -> np.ndarray:
        """
        Iterates the model from ``z0`` (model coordinates) under ``inputs``.

        :return: (len(inputs) + 1) x 45 predicted states, row 0 being C z0.
        """
        inputs = np.asarray(inputs, dtype=float).reshape(-1, self.input_dim)
        z = np.asarray(z0, dtype=float)
        outputs = np.empty((len(inputs) + 1, self.C.shape[0]))
        outputs[0] = self.C @ z
        for k, u in enumerate(inputs):
            z = self.A @ z + self.B @ u
            outputs[k + 1] = self.C @ z
        return outputs


@dataclass(frozen=True, eq=False)
class LiftedModel(LinearPredictor):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dictionary: ObservableDictionary
    sample_dt: float
    training_snapshots: int
    training_fingerprint: Optional[str] = None

    @property
    def fingerprint(self) -> str:
        return matrix_fingerprint(self.A, self.B, self.C)


def fit(data: LiftedSnapshotSet, rcond: float = DEFAULT_RCOND,
        fixed_point: Optional[np.ndarray] = None) -> LiftedModel:
    """
    Least-squares [A B] = X+ [X; U]^dagger.

    With ``fixed_point`` z*, the fit is constrained to A z* = z* so the lifted state z* stays put
    under zero input: A = M P + e e' with e = z* / |z*|, P = I - e e' and
    [M B] = (X+ - e e' X) [P X; U]^dagger.

    :param data: Training snapshot pairs.
    :param rcond: Relative singular value cutoff of the pseudoinverse.
    :param fixed_point: Lifted state the model must map onto itself at u = 0.
    """
    if data.snapshot_count < 1:
        raise exceptions.InsufficientData('fit needs at least one snapshot pair')

    m = data.dictionary.lifted_dim
    logger.debug(FIT_LOG.format(kind=data.dictionary.kind, order=data.dictionary.order,
                                snapshots=data.snapshot_count, lifted_dim=m, inputs=data.input_dim))
    if fixed_point is None:
        G = data.X_plus @ pseudoinverse(np.vstack([data.X, data.U]), rcond)
        A, B = G[:, :m], G[:, m:]
    else:
        e = np.asarray(fixed_point, dtype=float).reshape(-1)
        if e.shape != (m,) or not np.all(np.isfinite(e)) or not np.any(e):
            raise exceptions.InvalidSpec(f'fixed point must be a finite non-zero vector of length {m}')
        e = e / np.linalg.norm(e)
        along = np.outer(e, e @ data.X)
        G = (data.X_plus - along) @ pseudoinverse(np.vstack([data.X - along, data.U]), rcond)
        A = G[:, :m] - np.outer(G[:, :m] @ e, e) + np.outer(e, e)
        B = G[:, m:]

    return LiftedModel(A=A, B=B, C=projection_matrix(data.dictionary),
                       dictionary=data.dictionary, sample_dt=data.sample_dt,
                       training_snapshots=data.snapshot_count,
                       training_fingerprint=matrix_fingerprint(data.X, data.X_plus, data.U))


def least_squares_residual(model: LiftedModel, data: LiftedSnapshotSet) -> float:
    return float(np.linalg.norm(data.X_plus - model.A @ data.X - model.B @ data.U))


@dataclass(frozen=True, eq=False)
class KoopmanSpectrum:
    """
    Eigen-triplets of A sorted by descending mode power (ties: larger |lambda|, then original
    position). ``permutation[i]`` is the LAPACK position of entry i, ``partner[i]`` the index of
    its conjugate (itself when real).
    """
    eigenvalues: np.ndarray
    modes: np.ndarray
    adjoint_modes: np.ndarray
    mode_powers: np.ndarray
    permutation: np.ndarray
    partner: np.ndarray

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def eigenfunctions(self, Z: np.ndarray) -> np.ndarray:
        """phi_i(z) = <z, w_i> = w_i^H z for every column of Z."""
        return self.adjoint_modes.conj().T @ np.asarray(Z)

    def continuous_eigenvalues(self, sample_dt: float) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.log(self.eigenvalues.astype(complex)) / sample_dt

    def cumulative_power(self, indices) -> float:
        total = self.mode_powers.sum()
        return float(self.mode_powers[list(indices)].sum() / total) if total > 0 else 0.0


def spectrum(model: LiftedModel, training: LiftedSnapshotSet,
             condition_cap: float = EIG_CONDITION_CAP) -> KoopmanSpectrum:
    """
    Koopman eigenvalues, modes and adjoint modes of ``model.A`` with mode powers averaged
    over the training snapshots.
    """
    if training.snapshot_count < 1:
        raise exceptions.InsufficientData('mode powers need at least one training snapshot')

    eigenvalues, V, W = eig_biorthonormal(model.A, condition_cap)
    powers = np.abs(W.conj().T @ training.X).mean(axis=1)
    partner = conjugate_partners(eigenvalues)
    powers = (powers + powers[partner]) / 2

    order = np.array(sorted(range(len(eigenvalues)), key=lambda i: (-powers[i], -abs(eigenvalues[i]), i)))
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    return KoopmanSpectrum(eigenvalues=eigenvalues[order], modes=V[:, order], adjoint_modes=W[:, order],
                           mode_powers=powers[order], permutation=order, partner=inverse[partner[order]])
