import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la

from koopman_ctl import exceptions
from koopman_ctl.const import INPUT_DIM, PLAN_HORIZON, Q_WEIGHT, R_WEIGHT, U_BOUNDS
from koopman_ctl.hdmd import LinearPredictor
from koopman_ctl.numerics import solve_dare, spectral_radius
from koopman_ctl.observables import ObservableDictionary, lift_point
from koopman_ctl.reduce import ReducedModel
from koopman_ctl.surrogate.plant import PlantConfig, PlantState, Trajectory, simulate

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LQRDesign:
    """
    Gain K of u = u_ref - K (z - z_ref) for a full or reduced model, u_ref being zero without
    feed-forward. ``z_ref`` lives in the model's own coordinates.
    """
    Q: np.ndarray
    R: np.ndarray
    K: np.ndarray
    P: np.ndarray
    x_ref: np.ndarray
    z_ref: np.ndarray
    u_bounds: Tuple[float, float]
    horizon: int
    closed_loop_radius: float
    u_ref: Optional[np.ndarray] = None

    @property
    def offset(self) -> np.ndarray:
        return np.zeros(self.K.shape[0]) if self.u_ref is None else self.u_ref


@dataclass(frozen=True, eq=False)
class Plan:
    """Model-computed inputs, the states the model predicts for them and the clamped share."""
    inputs: np.ndarray
    predicted: np.ndarray
    saturation_fraction: float


def default_penalties(state_dim: int, input_dim: int = INPUT_DIM) -> Tuple[np.ndarray, np.ndarray]:
    return Q_WEIGHT * np.eye(state_dim), R_WEIGHT * np.eye(input_dim)


def lift_reference(x_ref, dictionary: ObservableDictionary, rm: Optional[ReducedModel] = None) -> np.ndarray:
    """
    Lifted target of a steady pose: a constant history for delay lifts, the powers of x_ref for
    monomial lifts, then encoded into reduced coordinates when ``rm`` is given.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    if not np.all(np.isfinite(x_ref)):
        raise exceptions.InvalidReference('reference pose has non-finite entries')

    z_ref = lift_point(np.tile(x_ref, (dictionary.history, 1)), dictionary)
    return z_ref if rm is None else rm.encode(z_ref)


def initial_lifted_state(history, dictionary: ObservableDictionary) -> np.ndarray:
    """Lifted vector built from the most recent plant samples (oldest first)."""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if len(history) < dictionary.history:
        history = np.vstack([np.tile(history[0], (dictionary.history - len(history), 1)), history])
    return lift_point(history[-dictionary.history:], dictionary)


def steady_state_feedforward(training: Trajectory, x_ref) -> np.ndarray:
    """Input applied at the training sample closest to ``x_ref``."""
    if len(training.inputs) == 0:
        raise exceptions.InsufficientData('feed-forward estimate needs a trajectory with inputs')
    distances = np.linalg.norm(training.states[:len(training.inputs)] - np.asarray(x_ref, dtype=float), axis=1)
    return training.inputs[int(np.argmin(distances))].copy()


def steady_state_target(model: LinearPredictor, x_ref, u_bounds: Optional[Tuple[float, float]] = None
                        ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Model-consistent equilibrium (z_s, u_s) holding the pose: least-squares solution of
    z_s = A z_s + B u_s, C z_s = x_ref in the model's own coordinates.

    When ``u_bounds`` are given, u_s is clamped into them and z_s re-solved for the clamped input.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    if not np.all(np.isfinite(x_ref)):
        raise exceptions.InvalidReference('reference pose has non-finite entries')

    n, p = model.dim, model.input_dim
    lhs = np.block([[model.A - np.eye(n), model.B], [model.C, np.zeros((model.C.shape[0], p))]])
    rhs = np.concatenate([np.zeros(n), x_ref])
    solution = la.lstsq(lhs, rhs)[0]
    z_s, u_s = solution[:n], solution[n:]
    if u_bounds is not None:
        clamped = np.clip(u_s, *u_bounds)
        if np.any(clamped != u_s):
            logger.warning('steady-state input %s clamped into %s', np.array2string(u_s, precision=3), u_bounds)
            u_s = clamped
            z_s = la.lstsq(np.vstack([model.A - np.eye(n), model.C]),
                           np.concatenate([-model.B @ u_s, x_ref]))[0]
    return z_s, u_s


def design(model: LinearPredictor, Q, R,
           x_ref=None,
           u_bounds: Tuple[float, float] = U_BOUNDS,
           horizon: int = PLAN_HORIZON,
           u_ref=None,
           steady_state: bool = False,
           state_regularization: float = 0.0,
           method: str = 'doubling') -> LQRDesign:
    """
    LQR gain for ``model`` with the pose penalty lifted as Q_z = C' Q C.

    :param model: Full or reduced model.
    :param Q: State penalty on x.
    :param R: Input penalty.
    :param x_ref: Target pose; zeros when omitted.
    :param u_bounds: Per-channel clamp applied when planning.
    :param horizon: Default plan length in samples.
    :param u_ref: Optional feed-forward input added to the feedback law.
    :param steady_state: Target the model equilibrium of :func:`steady_state_target` and feed its
        input forward instead of the lifted pose; overrides ``u_ref``.
    :param state_regularization: Extra multiple of the identity added to Q_z.
    :param method: DARE method, see :func:`koopman_ctl.numerics.solve_dare`.
    """
    Q, R = np.asarray(Q, dtype=float), np.asarray(R, dtype=float)
    if np.any(np.diag(Q) < 0) or np.any(np.diag(R) <= 0):
        raise exceptions.InvalidSpec('penalties need Q >= 0 and R > 0 on the diagonal')
    if not u_bounds[0] < u_bounds[1]:
        raise exceptions.InvalidSpec(f'u_bounds must satisfy lower < upper, got {u_bounds}')

    Q_z = model.C.T @ Q @ model.C + state_regularization * np.eye(model.dim)
    P, K = solve_dare(model.A, model.B, Q_z, R, method=method)

    x_ref = np.zeros(model.C.shape[0]) if x_ref is None else np.asarray(x_ref, dtype=float)
    if steady_state:
        z_ref, u_ref = steady_state_target(model, x_ref, u_bounds)
    else:
        z_ref = lift_reference(x_ref, model.dictionary, model if isinstance(model, ReducedModel) else None)
    return LQRDesign(Q=Q, R=R, K=K, P=P, x_ref=x_ref, z_ref=z_ref, u_bounds=tuple(u_bounds), horizon=horizon,
                     closed_loop_radius=spectral_radius(model.A - model.B @ K),
                     u_ref=None if u_ref is None else np.asarray(u_ref, dtype=float))


def plan_open_loop(lqr: LQRDesign, model: LinearPredictor, z0, steps: Optional[int] = None) -> Plan:
    """
    Runs u_k = clamp(u_ref - K (z_k - z_ref)), z_{k+1} = A z_k + B u_k, x^_k = C z_{k+1} on the model
    and freezes the resulting inputs.

    :param z0: Lifted initial state; encoded into the model's coordinates.
    :param steps: Plan length, ``lqr.horizon`` when omitted.
    """
    steps = lqr.horizon if steps is None else steps
    lower, upper = lqr.u_bounds
    z = model.encode(np.asarray(z0, dtype=float))
    inputs = np.empty((steps, model.input_dim))
    predicted = np.empty((steps, model.C.shape[0]))
    clamped = 0
    for k in range(steps):
        raw = -lqr.K @ (z - lqr.z_ref) + lqr.offset
        u = np.clip(raw, lower, upper)
        clamped += int(np.count_nonzero(u != raw))
        z = model.A @ z + model.B @ u
        inputs[k] = u
        predicted[k] = model.C @ z

    fraction = clamped / inputs.size if inputs.size else 0.0
    if fraction > 0.5:
        logger.warning('plan saturates %.0f%% of its input samples', 100 * fraction)
    return Plan(inputs=inputs, predicted=predicted, saturation_fraction=fraction)


def plan_cost(lqr: LQRDesign, model: LinearPredictor, z0, inputs) -> float:
    """J = sum (x_i - x_ref)' Q (x_i - x_ref) + (u_i - u_ref)' R (u_i - u_ref) with x_i = C z_{i+1}."""
    predicted = model.rollout(model.encode(np.asarray(z0, dtype=float)), inputs)[1:]
    error = predicted - lqr.x_ref
    effort = np.asarray(inputs, dtype=float).reshape(-1, model.input_dim) - lqr.offset
    return float(np.einsum('ki,ij,kj->', error, lqr.Q, error) + np.einsum('ki,ij,kj->', effort, lqr.R, effort))


def deploy(plant_cfg: PlantConfig, state: PlantState, inputs) -> Trajectory:
    """Replays a frozen plan on the plant from ``state`` without feedback and returns the true poses."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    if not np.all(np.isfinite(inputs)) or np.any(inputs < 0) or np.any(inputs > 1):
        raise exceptions.InvalidSpec('deployed inputs must be finite and lie in [0, 1]')

    trajectory, _ = simulate(state, inputs, replace(plant_cfg, noise_std=0.0))
    return trajectory
