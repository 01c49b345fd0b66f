import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import root

from koopman_ctl import exceptions
from koopman_ctl.const import INPUT_DIM, INTEGRATOR_DT, NODE_COUNT, SAMPLE_DT, SETTLE_SECONDS, SIMULATE_LOG

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantConfig:
    """
    Gravity-loaded chain of point masses hanging from a fixed anchor, pulled by three
    helically biased muscle force fields. Units are SI.
    """
    node_count: int = NODE_COUNT
    segment_rest_length: float = 0.05
    axial_stiffness: float = 50.0
    cubic_stiffness: float = 5000.0
    bending_stiffness: float = 10.0
    damping: float = 0.05
    node_mass: float = 0.0008
    tip_extra_mass: float = 0.040
    muscle_gain: float = 0.02
    helical_pitch: float = 0.3
    axial_component: float = 0.5
    gravity: float = 9.81
    integrator_dt: float = INTEGRATOR_DT
    sample_dt: float = SAMPLE_DT
    noise_std: float = 0.0

    def __post_init__(self):
        if self.node_count < 2:
            raise exceptions.InvalidSpec(f'node_count must be >= 2, got {self.node_count}')
        positive = ('segment_rest_length', 'axial_stiffness', 'bending_stiffness', 'node_mass',
                    'integrator_dt', 'sample_dt')
        for name in positive:
            if not getattr(self, name) > 0:
                raise exceptions.InvalidSpec(f'{name} must be positive, got {getattr(self, name)}')
        for name in ('cubic_stiffness', 'damping', 'tip_extra_mass', 'gravity', 'noise_std'):
            if getattr(self, name) < 0:
                raise exceptions.InvalidSpec(f'{name} must be non-negative, got {getattr(self, name)}')
        ratio = self.sample_dt / self.integrator_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise exceptions.InvalidSpec(f'sample_dt {self.sample_dt} is not a multiple of '
                                         f'integrator_dt {self.integrator_dt}')

    @property
    def substeps(self) -> int:
        return int(round(self.sample_dt / self.integrator_dt))

    @property
    def state_dim(self) -> int:
        return 3 * self.node_count

    @cached_property
    def masses(self) -> np.ndarray:
        m = np.full(self.node_count, self.node_mass)
        m[-1] += self.tip_extra_mass
        return m

    @cached_property
    def muscle_directions(self) -> np.ndarray:
        """(muscle, node, xyz) unit force directions."""
        muscles = np.arange(1, INPUT_DIM + 1)[:, None]
        nodes = np.arange(1, self.node_count + 1)[None, :]
        angle = 2 * np.pi * muscles / INPUT_DIM + self.helical_pitch * nodes
        directions = np.stack([np.cos(angle), np.sin(angle), np.full(angle.shape, self.axial_component)], axis=-1)
        return directions / np.sqrt(1.0 + self.axial_component ** 2)


@dataclass(frozen=True, eq=False)
class PlantState:
    """Node positions and velocities, shape (node_count, 3); node 0 is the fixed anchor at the origin."""
    positions: np.ndarray
    velocities: np.ndarray

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Sampled observations ``states`` (T x 45) and the inputs held over each sample interval
    ``inputs`` (T x 3 or (T-1) x 3). ``start_index`` is the absolute sample index of row 0.
    """
    sample_dt: float
    states: np.ndarray
    inputs: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        if self.states.ndim != 2 or self.inputs.ndim != 2:
            raise exceptions.InvalidSpec('trajectory states and inputs must be two-dimensional')
        if len(self.states) - len(self.inputs) not in (0, 1):
            raise exceptions.InvalidSpec(f'{len(self.states)} states cannot pair with {len(self.inputs)} inputs')
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.inputs))):
            raise exceptions.InvalidSpec('trajectory has non-finite entries')

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return (self.start_index + np.arange(len(self.states))) * self.sample_dt

    def window(self, start: int, stop: Optional[int] = None) -> 'Trajectory':
        """Rows [start, stop) with inputs kept aligned to their states."""
        stop = len(self.states) if stop is None else min(stop, len(self.states))
        return Trajectory(sample_dt=self.sample_dt,
                          states=self.states[start:stop],
                          inputs=self.inputs[start:min(stop, len(self.inputs))],
                          start_index=self.start_index + start)

    def aligned(self) -> 'Trajectory':
        """Drops the trailing state that has no applied input."""
        return self.window(0, len(self.inputs)) if len(self.inputs) else self


def rest_state(cfg: PlantConfig) -> PlantState:
    """Straight chain hanging along -z with every segment at rest length."""
    z = -cfg.segment_rest_length * np.arange(1, cfg.node_count + 1)
    positions = np.column_stack([np.zeros(cfg.node_count), np.zeros(cfg.node_count), z])
    return PlantState(positions=positions, velocities=np.zeros_like(positions))


def observe(state: PlantState) -> np.ndarray:
    """Tracker positions [p_1; ...; p_N] in meters."""
    return state.positions.reshape(-1).copy()


def _spring_forces(full: np.ndarray, lag: int, rest: float, k1: float, k3: float) -> Tuple[np.ndarray, np.ndarray]:
    d = full[lag:] - full[:-lag]
    length = np.linalg.norm(d, axis=1)
    e = length - rest
    magnitude = -(k1 * e + k3 * e ** 3)
    force = (magnitude / length)[:, None] * d
    forces = np.zeros_like(full)
    forces[lag:] += force
    forces[:-lag] -= force
    return forces, e


def force_model(state: PlantState, u, cfg: PlantConfig) -> np.ndarray:
    """
    Net force on every free node, shape (node_count, 3).

    Axial springs join neighbors (including the anchor), linear bending springs of rest
    length 2 L0 join next-nearest neighbors, plus viscous damping, gravity along -z and the
    three muscle fields scaled by the inputs.
    """
    u = np.asarray(u, dtype=float)
    full = np.vstack([np.zeros((1, 3)), state.positions])

    axial, _ = _spring_forces(full, 1, cfg.segment_rest_length, cfg.axial_stiffness, cfg.cubic_stiffness)
    bending, _ = _spring_forces(full, 2, 2 * cfg.segment_rest_length, cfg.bending_stiffness, 0.0)

    forces = (axial + bending)[1:]
    forces -= cfg.damping * state.velocities
    forces[:, 2] -= cfg.masses * cfg.gravity
    forces += cfg.muscle_gain * np.einsum('i,ijk->jk', u, cfg.muscle_directions)
    return forces


def energy(state: PlantState, cfg: PlantConfig) -> float:
    """Kinetic + spring potential + gravitational energy (zero height at the anchor)."""
    full = np.vstack([np.zeros((1, 3)), state.positions])
    _, e_axial = _spring_forces(full, 1, cfg.segment_rest_length, cfg.axial_stiffness, cfg.cubic_stiffness)
    _, e_bending = _spring_forces(full, 2, 2 * cfg.segment_rest_length, cfg.bending_stiffness, 0.0)

    kinetic = 0.5 * np.sum(cfg.masses * np.sum(state.velocities ** 2, axis=1))
    springs = np.sum(0.5 * cfg.axial_stiffness * e_axial ** 2 + 0.25 * cfg.cubic_stiffness * e_axial ** 4)
    springs += np.sum(0.5 * cfg.bending_stiffness * e_bending ** 2)
    gravitational = np.sum(cfg.masses * cfg.gravity * state.positions[:, 2])
    return float(kinetic + springs + gravitational)


def step(state: PlantState, u, cfg: PlantConfig) -> PlantState:
    """Advance one sample period with u held, by semi-implicit Euler substeps."""
    u = np.asarray(u, dtype=float)
    if u.shape != (INPUT_DIM,) or np.any(u < 0) or np.any(u > 1):
        raise exceptions.InvalidSpec(f'inputs must lie in [0, 1]^{INPUT_DIM}, got {u}')

    dt = cfg.integrator_dt
    inverse_mass = (1.0 / cfg.masses)[:, None]
    positions, velocities = state.positions.copy(), state.velocities.copy()
    for _ in range(cfg.substeps):
        forces = force_model(PlantState(positions, velocities), u, cfg)
        velocities = velocities + dt * forces * inverse_mass
        positions = positions + dt * velocities

    return PlantState(positions=positions, velocities=velocities)


def simulate(x0: PlantState, inputs: Sequence, cfg: PlantConfig,
             seed: int = 0) -> Tuple[Trajectory, PlantState]:
    """
    Runs the plant through ``inputs`` and samples the trackers after every step.

    :param x0: Initial plant state.
    :param inputs: Sequence of input vectors, one per sample interval.
    :param cfg: Plant configuration.
    :param seed: Seed of the measurement noise stream, used when ``cfg.noise_std > 0``.
    :return: (trajectory of len(inputs) + 1 observations, final plant state)
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    if not np.all(np.isfinite(inputs)):
        raise exceptions.InvalidSpec('plant inputs must be finite')

    states = np.empty((len(inputs) + 1, cfg.state_dim))
    states[0] = observe(x0)
    state = x0
    for k, u in enumerate(inputs):
        state = step(state, u, cfg)
        if not state.is_finite():
            raise exceptions.SimulationDiverged(k + 1)
        states[k + 1] = observe(state)

    if cfg.noise_std > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        states = states + rng.normal(0.0, cfg.noise_std, size=states.shape)

    logger.debug(SIMULATE_LOG.format(steps=len(inputs), substeps=cfg.substeps))
    return Trajectory(sample_dt=cfg.sample_dt, states=states, inputs=inputs), state


def settle(cfg: PlantConfig, seconds: float = SETTLE_SECONDS) -> PlantState:
    """
    Gravity-settled equilibrium: a zero-input run from the rest line, then the static force
    balance solved from where the run ends so that ``step`` maps the result onto itself at u = 0.
    """
    steps = int(round(seconds / cfg.sample_dt))
    state = rest_state(cfg)
    zero = np.zeros(INPUT_DIM)
    for k in range(steps):
        state = step(state, zero, cfg)
        if not state.is_finite():
            raise exceptions.SimulationDiverged(k + 1)

    at_rest = np.zeros_like(state.positions)

    def net_force(flat: np.ndarray) -> np.ndarray:
        return force_model(PlantState(flat.reshape(-1, 3), at_rest), zero, cfg).reshape(-1)

    start = state.positions.reshape(-1)
    result = root(net_force, start, method='hybr', options={'xtol': 1e-14})
    if not np.all(np.isfinite(result.x)) or np.abs(net_force(result.x)).max() > np.abs(net_force(start)).max():
        logger.warning('static equilibrium solve did not improve the settled run: %s', result.message)
        return PlantState(positions=state.positions, velocities=at_rest)
    return PlantState(positions=result.x.reshape(-1, 3), velocities=at_rest)
