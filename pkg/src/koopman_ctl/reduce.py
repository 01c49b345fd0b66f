import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from koopman_ctl import exceptions
from koopman_ctl.const import BASIS_CONDITION_CAP
from koopman_ctl.hdmd import KoopmanSpectrum, LiftedModel, LinearPredictor, matrix_fingerprint
from koopman_ctl.observables import ObservableDictionary

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ReducedModel(LinearPredictor):
    """
    Lifted model projected onto a conjugate-closed set of Koopman modes, written in the real
    basis [Re v, Im v] so every conjugate pair a +/- bi becomes the block [[a, b], [-b, a]].

    ``basis`` is V_sel (m x n, complex), ``real_basis`` its realification and ``encoder`` the
    realified adjoint modes mapping lifted vectors to reduced coordinates (encoder @ real_basis = I).
    ``realifier`` lists, per reduced coordinate, (kept index, 're'|'im'|'real', conjugate index).
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    basis: np.ndarray
    real_basis: np.ndarray
    encoder: np.ndarray
    realifier: Tuple[Tuple[int, str, int], ...]
    kept_indices: Tuple[int, ...]
    eigenvalues: np.ndarray
    cumulative_power: float
    parent: str
    dictionary: ObservableDictionary
    sample_dt: float

    def encode(self, Z: np.ndarray) -> np.ndarray:
        return self.encoder @ np.asarray(Z, dtype=float)

    @property
    def fingerprint(self) -> str:
        return matrix_fingerprint(self.A, self.B, self.C, self.encoder)


def select_modes(spec: KoopmanSpectrum, n: int) -> List[int]:
    """
    The ``n`` leading modes by power, closed under conjugation.

    ``spec`` is already ordered by power with ties broken by |lambda| and position, so the
    leading ``n`` entries are the selection before closure.
    """
    if not 1 <= n <= len(spec):
        raise exceptions.InvalidSpec(f'mode count must lie in [1, {len(spec)}], got {n}')

    kept = set(range(n))
    kept.update(int(spec.partner[i]) for i in range(n))
    return sorted(kept)


def select_by_power_fraction(spec: KoopmanSpectrum, fraction: float) -> List[int]:
    """Smallest leading selection whose cumulative mode power reaches ``fraction`` of the total."""
    if not 0 < fraction <= 1:
        raise exceptions.InvalidSpec(f'power fraction must lie in (0, 1], got {fraction}')
    cumulative = np.cumsum(spec.mode_powers) / spec.mode_powers.sum()
    n = int(np.searchsorted(cumulative, fraction - 1e-12)) + 1
    return select_modes(spec, min(n, len(spec)))


def _realify(spec: KoopmanSpectrum, indices: List[int]):
    """Real basis columns, the matching encoder rows and the realifier record."""
    columns, rows, realifier = [], [], []
    kept = set(indices)
    for i in indices:
        j = int(spec.partner[i])
        if j == i:
            columns.append(spec.modes[:, i].real)
            rows.append(spec.adjoint_modes[:, i].real)
            realifier.append((i, 'real', i))
        elif j not in kept:
            raise exceptions.InvalidSpec(f'mode {i} is kept without its conjugate {j}')
        elif spec.eigenvalues[i].imag > 0:
            columns.extend([spec.modes[:, i].real, spec.modes[:, i].imag])
            rows.extend([2 * spec.adjoint_modes[:, i].real, 2 * spec.adjoint_modes[:, i].imag])
            realifier.extend([(i, 're', j), (i, 'im', j)])
    return np.column_stack(columns), np.vstack(rows), tuple(realifier)


def _selection_matrix(realifier, kept_indices) -> np.ndarray:
    position = {index: k for k, index in enumerate(kept_indices)}
    n = len(realifier)
    S = np.zeros((n, n), dtype=complex)
    for row, (index, part, conjugate) in enumerate(realifier):
        if part == 'real':
            S[row, position[index]] = 1.0
        elif part == 're':
            S[row, position[index]] = 1.0
            S[row, position[conjugate]] = 1.0
        else:
            S[row, position[index]] = 1j
            S[row, position[conjugate]] = -1j
    return S


def project(model: LiftedModel, spec: KoopmanSpectrum, indices,
            condition_cap: float = BASIS_CONDITION_CAP) -> ReducedModel:
    """
    Reduced model A~ = W^H A V, B~ = W^H B, C~ = C V on the span of the kept modes, where the
    adjoint modes W satisfy W^H V = I. For eigenvector-exact modes W_sel^H coincides with the
    left inverse of V_sel that leaves the dropped modes out.

    Coordinates are realified: every pair (v, conj v) becomes [Re v, Im v] and the matching
    encoder rows [2 Re w, 2 Im w], so a +/- bi turns into the block [[a, b], [-b, a]].
    """
    indices = sorted(int(i) for i in indices)
    if not indices or indices[0] < 0 or indices[-1] >= len(spec):
        raise exceptions.InvalidSpec(f'mode indices out of range for a spectrum of {len(spec)} modes')

    real_basis, encoder, realifier = _realify(spec, indices)
    condition = np.linalg.cond(real_basis)
    if not np.isfinite(condition) or condition > condition_cap:
        raise exceptions.IllConditionedBasis(f'mode basis condition number {condition:.3e} exceeds {condition_cap:.3e}')

    return ReducedModel(A=encoder @ model.A @ real_basis,
                        B=encoder @ model.B,
                        C=model.C @ real_basis,
                        basis=spec.modes[:, indices],
                        real_basis=real_basis,
                        encoder=encoder,
                        realifier=realifier,
                        kept_indices=tuple(indices),
                        eigenvalues=spec.eigenvalues[indices],
                        cumulative_power=spec.cumulative_power(indices),
                        parent=model.fingerprint,
                        dictionary=model.dictionary,
                        sample_dt=model.sample_dt)


def realifier_matrix(rm: ReducedModel) -> np.ndarray:
    """S with V_sel = V_real S, so A_real = S A_c S^-1, B_real = S B_c and C_real = C_c S^-1."""
    return _selection_matrix(rm.realifier, rm.kept_indices)


def complex_projection(model: LiftedModel, rm: ReducedModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """W_sel^H A V_sel, W_sel^H B and C V_sel in the complex mode basis, recovered as W_sel^H = S^-1 E."""
    S = realifier_matrix(rm)
    left = np.linalg.solve(S, rm.encoder)
    return left @ model.A @ rm.basis, left @ model.B, model.C @ rm.basis


def imaginary_residue(model: LiftedModel, rm: ReducedModel) -> float:
    """
    Largest imaginary magnitude left after realifying the complex projection, relative to the
    largest entry; it vanishes exactly for a conjugate-closed selection.
    """
    A_c, B_c, C_c = complex_projection(model, rm)
    S = realifier_matrix(rm)
    S_inv = np.linalg.inv(S)
    realified = [S @ A_c @ S_inv, S @ B_c, C_c @ S_inv]
    scale = max(1.0, max(np.abs(M).max() for M in realified))
    return float(max(np.abs(M.imag).max() for M in realified) / scale)


def reduced_rollout(rm: ReducedModel, z0: np.ndarray, inputs) -> np.ndarray:
    """x^_k = C~ z~_k along z~_{k+1} = A~ z~_k + B~ u_k, starting at reduced coordinates z0."""
    return rm.rollout(z0, inputs)
