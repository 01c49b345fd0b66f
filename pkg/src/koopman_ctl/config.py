import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from koopman_ctl import exceptions
from koopman_ctl.const import (BASIS_CONDITION_CAP, DEFAULT_RCOND, EIG_CONDITION_CAP, HOLD_RANGE, MODE_COUNTS,
                               MONOMIAL_SCALE, N_GAUSSIANS, PLAN_HORIZON, POSE_FRACTIONS, Q_WEIGHT, R_WEIGHT,
                               REGIME_DURATION, ROLLOUT_SECONDS, SPLIT_FRACTION, STATE_DIM, SWEEP_DELAY_ORDERS,
                               SWEEP_MONOMIAL_ORDERS, SWEEP_SAMPLE_COUNTS, U_BOUNDS)
from koopman_ctl.observables import ObservableDictionary
from koopman_ctl.surrogate.plant import PlantConfig
from koopman_ctl.surrogate.signals import SignalSpec

STAGES = ('regime1', 'regime2', 'noise1', 'noise2')
FEEDFORWARD_SOURCES = ('none', 'training', 'model')


@dataclass(frozen=True)
class RegimeConfig:
    """One training input regime; zero duration collects the initial sample only."""
    kind: str
    duration: float = REGIME_DURATION
    bounds: Tuple[float, float] = U_BOUNDS
    n_gaussians: int = N_GAUSSIANS
    hold_range: Tuple[float, float] = HOLD_RANGE
    level: Optional[float] = None

    def __post_init__(self):
        if self.duration < 0:
            raise exceptions.InvalidSpec(f'regime duration must be non-negative, got {self.duration}')

    def signal(self, sample_dt: float, seed: int) -> SignalSpec:
        return SignalSpec(kind=self.kind, duration=self.duration, sample_dt=sample_dt, bounds=self.bounds,
                          seed=seed, n_gaussians=self.n_gaussians, hold_range=self.hold_range, level=self.level)


@dataclass(frozen=True)
class DictionaryConfig:
    """:param monomial_scale: Length unit per meter the monomial powers are formed in (millimeters)."""
    kind: str = 'delay'
    order: int = 10
    monomial_scale: float = MONOMIAL_SCALE

    def __post_init__(self):
        self.build(STATE_DIM)

    def build(self, state_dim: int) -> ObservableDictionary:
        scale = self.monomial_scale if self.kind == 'monomial' else 1.0
        return ObservableDictionary(self.kind, self.order, state_dim, scale)


@dataclass(frozen=True)
class ControlConfig:
    """
    :param pose_fractions: Target poses, as positions within the training half of regime 1.
    :param feedforward: Steady-state input added to the feedback law: ``model`` solves the model
        equilibrium holding each target, ``training`` takes the input at the nearest training
        sample, ``none`` keeps the pure feedback law.
    """
    q_weight: float = Q_WEIGHT
    r_weight: float = R_WEIGHT
    u_bounds: Tuple[float, float] = U_BOUNDS
    horizon: int = PLAN_HORIZON
    pose_fractions: Tuple[float, ...] = POSE_FRACTIONS
    feedforward: str = 'model'
    state_regularization: float = 0.0
    dare_method: str = 'doubling'

    def __post_init__(self):
        if self.q_weight < 0 or self.r_weight <= 0:
            raise exceptions.InvalidSpec('control penalties need q_weight >= 0 and r_weight > 0')
        if self.horizon < 1:
            raise exceptions.InvalidSpec(f'plan horizon must be positive, got {self.horizon}')
        if not all(0 <= f <= 1 for f in self.pose_fractions):
            raise exceptions.InvalidSpec(f'pose fractions must lie in [0, 1], got {self.pose_fractions}')
        if self.feedforward not in FEEDFORWARD_SOURCES:
            raise exceptions.InvalidSpec(f'unknown feedforward {self.feedforward!r}, '
                                         f'expected one of {FEEDFORWARD_SOURCES}')


@dataclass(frozen=True)
class ReduceConfig:
    """``None`` in ``mode_counts`` stands for the full model."""
    mode_counts: Tuple[Optional[int], ...] = MODE_COUNTS
    power_fraction: Optional[float] = None
    eig_condition_cap: float = EIG_CONDITION_CAP
    basis_condition_cap: float = BASIS_CONDITION_CAP


@dataclass(frozen=True)
class EvaluateConfig:
    delay_orders: Tuple[int, ...] = SWEEP_DELAY_ORDERS
    monomial_orders: Tuple[int, ...] = SWEEP_MONOMIAL_ORDERS
    monomial_scale: float = MONOMIAL_SCALE
    sample_counts: Tuple[int, ...] = SWEEP_SAMPLE_COUNTS
    rollout_seconds: float = ROLLOUT_SECONDS
    verify_on_training: bool = False


def _regimes() -> Tuple[RegimeConfig, RegimeConfig]:
    return RegimeConfig('gaussian_mixture'), RegimeConfig('random_steps')


@dataclass(frozen=True)
class ExperimentConfig:
    """
    :param anchor_equilibrium: Constrain the fit so the lifted settled equilibrium is a fixed
        point of the model under zero input.
    """
    plant: PlantConfig = field(default_factory=PlantConfig)
    regimes: Tuple[RegimeConfig, ...] = field(default_factory=_regimes)
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    split_fraction: float = SPLIT_FRACTION
    rcond: float = DEFAULT_RCOND
    anchor_equilibrium: bool = True
    control: ControlConfig = field(default_factory=ControlConfig)
    reduce: ReduceConfig = field(default_factory=ReduceConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    seed: int = 0
    out: str = 'out'

    def __post_init__(self):
        if len(self.regimes) != 2:
            raise exceptions.InvalidSpec(f'exactly two training regimes are collected, got {len(self.regimes)}')
        if not 0 < self.split_fraction < 1:
            raise exceptions.InvalidSpec(f'split_fraction must lie in (0, 1), got {self.split_fraction}')
        if not 0 <= self.seed < 2 ** 64:
            raise exceptions.InvalidSpec(f'seed must be an unsigned 64-bit integer, got {self.seed}')

    @property
    def observables(self) -> ObservableDictionary:
        return self.dictionary.build(self.plant.state_dim)

    def stage_seeds(self) -> Dict[str, int]:
        """Per-stage seeds spawned from the global seed; the same seed always yields the same set."""
        children = np.random.SeedSequence(self.seed).spawn(len(STAGES))
        return {stage: int(child.generate_state(1, dtype=np.uint64)[0]) for stage, child in zip(STAGES, children)}

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None,
                       feedforward: Optional[str] = None, verify_on_training: bool = False) -> 'ExperimentConfig':
        """Applies command-line options; ``None`` and unset flags keep the configured value."""
        changes = {}
        if seed is not None:
            changes['seed'] = seed
        if out is not None:
            changes['out'] = out
        if feedforward is not None:
            changes['control'] = dataclasses.replace(self.control, feedforward=feedforward)
        if verify_on_training:
            changes['evaluate'] = dataclasses.replace(self.evaluate, verify_on_training=True)
        return dataclasses.replace(self, **changes) if changes else self

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        return _build(cls, data, 'config')

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        try:
            with open(path, encoding='utf8') as f:
                data = json.load(f)
        except json.JSONDecodeError as err:
            raise exceptions.ArtifactParseError(str(path), err.lineno, err.msg) from err
        if not isinstance(data, dict):
            raise exceptions.ConfigError(f'{path}: top level must be an object')
        return cls.from_dict(data)


_NESTED = {
    'plant': PlantConfig,
    'dictionary': DictionaryConfig,
    'control': ControlConfig,
    'reduce': ReduceConfig,
    'evaluate': EvaluateConfig,
}


def _value(name: str, value, where: str):
    if name in _NESTED and isinstance(value, dict):
        return _build(_NESTED[name], value, f'{where}.{name}')
    if name == 'regimes':
        return tuple(_build(RegimeConfig, regime, f'{where}.regimes[{i}]') for i, regime in enumerate(value))
    if isinstance(value, list):
        return tuple(value)
    return value


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise exceptions.ConfigError(f'{where} must be an object')
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise exceptions.ConfigError(f'unknown keys in {where}: {", ".join(unknown)}')
    try:
        return cls(**{name: _value(name, value, where) for name, value in data.items()})
    except TypeError as err:
        raise exceptions.ConfigError(f'{where}: {err}') from err
