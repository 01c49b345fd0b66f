from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from koopman_ctl import exceptions
from koopman_ctl.const import HOLD_RANGE, INPUT_DIM, N_GAUSSIANS, SAMPLE_DT, U_BOUNDS

SIGNAL_KINDS = ('gaussian_mixture', 'random_steps', 'constant')


@dataclass(frozen=True)
class SignalSpec:
    """
    Input signal recipe. The same spec always yields the same samples.

    :param kind: gaussian_mixture | random_steps | constant
    :param duration: Seconds; the signal has round(duration / sample_dt) samples.
    :param bounds: (u_min, u_max) shared by every channel.
    :param seed: Seed of the PCG64 stream.
    :param n_gaussians: Bumps per channel (gaussian_mixture).
    :param hold_range: (min, max) step hold in seconds (random_steps).
    :param level: Constant level, defaults to the midpoint of the bounds (constant).
    """
    kind: str
    duration: float
    sample_dt: float = SAMPLE_DT
    bounds: Tuple[float, float] = U_BOUNDS
    channel_count: int = INPUT_DIM
    seed: int = 0
    n_gaussians: int = N_GAUSSIANS
    hold_range: Tuple[float, float] = HOLD_RANGE
    level: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise exceptions.InvalidSpec(f'unknown signal kind {self.kind!r}, expected one of {SIGNAL_KINDS}')
        u_min, u_max = self.bounds
        if not u_min < u_max:
            raise exceptions.InvalidSpec(f'signal bounds must satisfy u_min < u_max, got {self.bounds}')
        if not self.duration > 0:
            raise exceptions.InvalidSpec(f'signal duration must be positive, got {self.duration}')
        if not self.sample_dt > 0 or self.channel_count < 1 or self.n_gaussians < 0:
            raise exceptions.InvalidSpec('sample_dt, channel_count and n_gaussians must be positive')
        if self.level is not None and not u_min <= self.level <= u_max:
            raise exceptions.InvalidSpec(f'constant level {self.level} lies outside {self.bounds}')

    @property
    def sample_count(self) -> int:
        return int(round(self.duration / self.sample_dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.sample_count) * self.sample_dt

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))


def _rescale(raw: np.ndarray, bounds: Tuple[float, float]) -> np.ndarray:
    u_min, u_max = bounds
    low, high = raw.min(), raw.max()
    if high == low:
        return np.full(raw.shape, (u_min + u_max) / 2)

    scaled = u_min + (raw - low) / (high - low) * (u_max - u_min)
    scaled = np.clip(scaled, u_min, u_max)
    scaled[np.argmin(raw)] = u_min
    scaled[np.argmax(raw)] = u_max
    return scaled


def gaussian_signal(spec: SignalSpec) -> np.ndarray:
    """
    Superposition of ``n_gaussians`` random bumps per channel, rescaled so its extremes land
    exactly on the bounds.

    :return: sample_count x channel_count array.
    """
    if spec.kind != 'gaussian_mixture':
        raise exceptions.InvalidSpec(f'gaussian_signal needs a gaussian_mixture spec, got {spec.kind!r}')

    rng = spec.rng()
    t = spec.times
    signal = np.empty((spec.sample_count, spec.channel_count))
    for channel in range(spec.channel_count):
        amplitude = rng.uniform(-1.0, 1.0, spec.n_gaussians)
        center = rng.uniform(0.0, spec.duration, spec.n_gaussians)
        width = rng.uniform(spec.duration / 200, spec.duration / 20, spec.n_gaussians)
        raw = np.exp(-(t[:, None] - center) ** 2 / (2 * width ** 2)) @ amplitude
        signal[:, channel] = _rescale(raw, spec.bounds) if len(t) else raw
    return signal


def step_signal(spec: SignalSpec) -> np.ndarray:
    """Piecewise-constant levels drawn uniformly in the bounds, held for random durations."""
    if spec.kind != 'random_steps':
        raise exceptions.InvalidSpec(f'step_signal needs a random_steps spec, got {spec.kind!r}')
    hold_min, hold_max = spec.hold_range
    if not 0 < hold_min <= hold_max:
        raise exceptions.InvalidSpec(f'hold_range must satisfy 0 < min <= max, got {spec.hold_range}')

    rng = spec.rng()
    u_min, u_max = spec.bounds
    t = spec.times
    signal = np.empty((spec.sample_count, spec.channel_count))
    for channel in range(spec.channel_count):
        start = 0.0
        while start < spec.duration:
            hold = rng.uniform(hold_min, hold_max)
            height = rng.uniform(u_min, u_max)
            signal[(t >= start) & (t < start + hold), channel] = height
            start += hold
    return signal


def constant_signal(spec: SignalSpec) -> np.ndarray:
    if spec.kind != 'constant':
        raise exceptions.InvalidSpec(f'constant_signal needs a constant spec, got {spec.kind!r}')
    level = sum(spec.bounds) / 2 if spec.level is None else spec.level
    return np.full((spec.sample_count, spec.channel_count), float(level))


def generate(spec: SignalSpec) -> np.ndarray:
    if spec.kind == 'gaussian_mixture':
        return gaussian_signal(spec)
    elif spec.kind == 'random_steps':
        return step_signal(spec)

    return constant_signal(spec)


def exhaust_of(u) -> np.ndarray:
    """Exhaust valve command paired with an intake command."""
    return 1.0 - np.asarray(u, dtype=float)
