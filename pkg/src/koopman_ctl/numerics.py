import logging
from typing import Tuple

import numpy as np
import scipy.linalg as la

from koopman_ctl import exceptions
from koopman_ctl.const import (DARE_LOG, DARE_MAX_ITERATIONS, DARE_TOLERANCE, DEFAULT_RCOND, EIG_CONDITION_CAP,
                               SPECTRUM_LOG)

logger = logging.getLogger(__name__)

DARE_METHODS = ('doubling', 'iteration', 'scipy')


def _as_finite(M, name: str = 'matrix') -> np.ndarray:
    M = np.asarray(M)
    M = M.astype(complex if np.iscomplexobj(M) else float, copy=False)
    if M.ndim != 2:
        raise exceptions.InvalidMatrix(f'{name} must be two-dimensional, got shape {M.shape}')
    if not np.all(np.isfinite(M)):
        raise exceptions.InvalidMatrix(f'{name} has non-finite entries')
    return M


def pseudoinverse(M, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """
    Moore-Penrose pseudoinverse through a thin SVD.

    :param M: Real or complex matrix, rows x cols.
    :param rcond: Singular values at or below ``rcond * sigma_max`` are treated as zero.
    :return: cols x rows matrix.
    """
    M = _as_finite(M)
    if M.size == 0:
        raise exceptions.InvalidMatrix(f'cannot pseudoinvert an empty {M.shape} matrix')
    if rcond < 0:
        raise exceptions.InvalidMatrix(f'rcond must be non-negative, got {rcond}')

    try:
        U, s, Vt = la.svd(M, full_matrices=False, lapack_driver='gesdd')
    except la.LinAlgError:
        try:
            U, s, Vt = la.svd(M, full_matrices=False, lapack_driver='gesvd')
        except la.LinAlgError as err:
            raise exceptions.NumericalFailure(f'SVD of {M.shape} matrix did not converge') from err

    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))

    keep = s > rcond * s[0]
    return (Vt[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def conjugate_partners(eigenvalues: np.ndarray) -> np.ndarray:
    """Index of each eigenvalue's conjugate; real eigenvalues point at themselves."""
    eigenvalues = np.asarray(eigenvalues, dtype=complex)
    partner = np.arange(eigenvalues.size)
    j = 0
    while j < eigenvalues.size:
        lam = eigenvalues[j]
        if lam.imag != 0.0 and j + 1 < eigenvalues.size and \
                np.isclose(eigenvalues[j + 1], np.conj(lam), rtol=1e-10, atol=1e-14):
            partner[j], partner[j + 1] = j + 1, j
            j += 2
            continue
        j += 1
    return partner


def eig_biorthonormal(A, condition_cap: float = EIG_CONDITION_CAP) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Right eigenvectors V and adjoint eigenvectors W of a real square matrix with W^H V = I.

    Columns of V have unit 2-norm and their largest-magnitude component real positive.
    Conjugate eigenvalue pairs are adjacent, positive imaginary part first, with exactly
    conjugate eigenvectors.

    :param A: Real square matrix.
    :param condition_cap: Largest admissible condition number of V.
    :return: (eigenvalues, V, W)
    """
    A = _as_finite(A, 'A')
    if A.shape[0] != A.shape[1]:
        raise exceptions.InvalidMatrix(f'A must be square, got shape {A.shape}')

    try:
        eigenvalues, V = la.eig(A)
    except la.LinAlgError as err:
        raise exceptions.NumericalFailure(f'eigendecomposition of {A.shape} matrix did not converge') from err

    eigenvalues = eigenvalues.astype(complex)
    V = V.astype(complex)
    V /= np.linalg.norm(V, axis=0)
    columns = np.arange(V.shape[1])
    pivot = V[np.argmax(np.abs(V), axis=0), columns]
    V /= pivot / np.abs(pivot)

    partner = conjugate_partners(eigenvalues)
    for j in columns:
        if partner[j] > j:
            if eigenvalues[j].imag < 0:
                eigenvalues[[j, j + 1]] = eigenvalues[[j + 1, j]]
                V[:, [j, j + 1]] = V[:, [j + 1, j]]
            eigenvalues[j + 1] = np.conj(eigenvalues[j])
            V[:, j + 1] = np.conj(V[:, j])
        elif partner[j] == j and abs(eigenvalues[j].imag) == 0.0:
            V[:, j] = V[:, j].real

    condition = np.linalg.cond(V)
    logger.debug(SPECTRUM_LOG.format(dim=A.shape[0], condition=condition))
    if not np.isfinite(condition) or condition > condition_cap:
        raise exceptions.DegenerateSpectrum(condition, condition_cap)

    W = la.inv(V).conj().T
    return eigenvalues, V, W


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(la.eigvals(M))))


def dare_residual(A, B, Q, R, P) -> float:
    """Relative residual ||A'PA - A'PB(R+B'PB)^-1 B'PA + Q - P||_F / max(1, ||P||_F)."""
    A, B, Q, R, P = (np.asarray(M, dtype=float) for M in (A, B, Q, R, P))
    BtPA = B.T @ P @ A
    rhs = A.T @ P @ A - BtPA.T @ la.solve(R + B.T @ P @ B, BtPA, assume_a='sym') + Q
    return float(np.linalg.norm(rhs - P) / max(1.0, np.linalg.norm(P)))


def _doubling(A, G, Q, tol, max_iterations):
    identity = np.eye(A.shape[0])
    A_k, G_k, H_k = A.copy(), G.copy(), Q.copy()
    for iteration in range(1, max_iterations + 1):
        W = identity + G_k @ H_k
        try:
            WA = la.solve(W, A_k)
            WG = la.solve(W, G_k)
        except (la.LinAlgError, ValueError) as err:
            raise exceptions.NoStabilizingSolution('singular doubling step', iteration) from err

        H_next = H_k + A_k.T @ H_k @ WA
        G_next = G_k + A_k @ WG @ A_k.T
        A_k = A_k @ WA
        G_k = (G_next + G_next.T) / 2
        H_next = (H_next + H_next.T) / 2
        if not (np.all(np.isfinite(H_next)) and np.all(np.isfinite(A_k))):
            raise exceptions.NoStabilizingSolution('doubling iterates diverged', iteration)

        delta = np.linalg.norm(H_next - H_k) / max(1.0, np.linalg.norm(H_k))
        H_k = H_next
        if delta < tol:
            return H_k, iteration

    raise exceptions.NoStabilizingSolution(f'no convergence within {max_iterations} doubling steps',
                                           max_iterations)


def _value_iteration(A, B, Q, R, tol, max_iterations):
    P = Q.copy()
    for iteration in range(1, max_iterations + 1):
        BtPA = B.T @ P @ A
        P_next = A.T @ P @ A - BtPA.T @ la.solve(R + B.T @ P @ B, BtPA, assume_a='sym') + Q
        P_next = (P_next + P_next.T) / 2
        if not np.all(np.isfinite(P_next)):
            raise exceptions.NoStabilizingSolution('value iteration diverged', iteration)

        delta = np.linalg.norm(P_next - P) / max(1.0, np.linalg.norm(P))
        P = P_next
        if delta < tol:
            return P, iteration

    raise exceptions.NoStabilizingSolution(f'no convergence within {max_iterations} iterations', max_iterations)


def solve_dare(A, B, Q, R,
               method: str = 'doubling',
               tol: float = DARE_TOLERANCE,
               max_iterations: int = DARE_MAX_ITERATIONS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stabilizing solution of the discrete algebraic Riccati equation and the LQR gain.

    :param A: n x n state matrix.
    :param B: n x p input matrix.
    :param Q: n x n symmetric positive semidefinite state penalty.
    :param R: p x p symmetric positive definite input penalty.
    :param method: ``'doubling'`` (value iteration in doubled form), ``'iteration'`` (plain value
        iteration) or ``'scipy'`` (``scipy.linalg.solve_discrete_are``).
    :param tol: Convergence threshold on ||P_next - P||_F / max(1, ||P||_F).
    :param max_iterations: Iteration cap.
    :return: (P, K) with K = (R + B'PB)^-1 B'PA.
    """
    A, B, Q, R = _as_finite(A, 'A'), _as_finite(B, 'B'), _as_finite(Q, 'Q'), _as_finite(R, 'R')
    n, p = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (p, p):
        raise exceptions.InvalidMatrix(f'inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}')
    if not (np.allclose(Q, Q.T) and np.allclose(R, R.T)):
        raise exceptions.InvalidMatrix('Q and R must be symmetric')
    try:
        la.cholesky(R)
    except la.LinAlgError as err:
        raise exceptions.InvalidMatrix('R must be positive definite') from err

    if method == 'doubling':
        G = B @ la.solve(R, B.T, assume_a='pos')
        P, iterations = _doubling(A, (G + G.T) / 2, Q, tol, max_iterations)
    elif method == 'iteration':
        P, iterations = _value_iteration(A, B, Q, R, tol, max_iterations)
    elif method == 'scipy':
        try:
            P, iterations = la.solve_discrete_are(A, B, Q, R), 0
        except (la.LinAlgError, ValueError) as err:
            raise exceptions.NoStabilizingSolution(str(err)) from err
    else:
        raise exceptions.InvalidSpec(f'unknown DARE method {method!r}, expected one of {DARE_METHODS}')

    K = la.solve(R + B.T @ P @ B, B.T @ P @ A, assume_a='sym')
    rho = spectral_radius(A - B @ K)
    logger.debug(DARE_LOG.format(method=method, iterations=iterations, residual=dare_residual(A, B, Q, R, P),
                                 rho=rho))
    if rho >= 1.0:
        raise exceptions.NoStabilizingSolution(f'closed loop spectral radius {rho:.6f} >= 1', iterations, rho)

    return P, K
