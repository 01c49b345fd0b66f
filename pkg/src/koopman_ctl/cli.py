"""
``koopman-ctl`` batch pipeline: one subcommand per stage, every artifact recorded in
``<out>/manifest.json`` together with the hashes of the artifacts it was built from.

    collect   data/regime{1,2}.csv, data/signal{1,2}.csv
    train     models/full.json
    spectrum  reports/spectrum.csv
    reduce    models/reduced_n{n}.json, reports/reduction.csv
    control   plans/, deployed/, reports/pose{p}_{model}.csv, reports/control.csv
    evaluate  reports/evaluation.csv, reports/sweep_{kind}.csv, reports/rollout_{model}.csv
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from koopman_ctl import control, exceptions, storage
from koopman_ctl.config import FEEDFORWARD_SOURCES, ExperimentConfig
from koopman_ctl.const import INPUT_DIM, LOG_FORMAT
from koopman_ctl.evaluation import convergence_sweep, pose_error_curve, rollout_reconstruction, single_step_error
from koopman_ctl.hdmd import KoopmanSpectrum, LinearPredictor, fit, spectrum
from koopman_ctl.observables import LiftedSnapshotSet, lift, split_trajectory
from koopman_ctl.reduce import imaginary_residue, project, select_by_power_fraction, select_modes
from koopman_ctl.surrogate.plant import Trajectory, observe, settle, simulate
from koopman_ctl.surrogate.signals import exhaust_of, generate

logger = logging.getLogger(__name__)

HELP = {
    'collect': 'simulate both training regimes on the surrogate plant',
    'train': 'fit the lifted linear model on the training halves',
    'spectrum': 'eigenvalues and mode powers of the lifted model',
    'reduce': 'project the model onto its most powerful modes',
    'control': 'plan, deploy and score open-loop LQR inputs',
    'evaluate': 'single-step errors, convergence sweeps and rollouts',
}
COMMANDS = tuple(HELP)


class Workspace:
    """Artifact paths of one output directory and its manifest."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.root = Path(config.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = storage.Manifest(self.root)

    def regime(self, i: int) -> Path:
        return self.root / 'data' / f'regime{i}.csv'

    def signal(self, i: int) -> Path:
        return self.root / 'data' / f'signal{i}.csv'

    @property
    def full_model(self) -> Path:
        return self.root / 'models' / 'full.json'

    def reduced_model(self, n: int) -> Path:
        return self.root / 'models' / f'reduced_n{n}.json'

    def report(self, name: str) -> Path:
        return self.root / 'reports' / name

    @property
    def regimes(self) -> List[Path]:
        return [self.regime(i) for i in range(1, len(self.config.regimes) + 1)]

    def hashes(self, paths: Sequence[Path]) -> Dict[str, str]:
        return {self.manifest.key(p): self.manifest.verify(p) for p in paths}

    def record(self, path: Path, digest: str, inputs: Sequence[Path] = ()) -> Path:
        self.manifest.record(path, digest, inputs)
        logger.info('wrote %s', self.manifest.key(path))
        return path


def _load_regimes(ws: Workspace) -> List[Trajectory]:
    ws.hashes(ws.regimes)
    return [storage.read_trajectory(p, ws.config.plant.sample_dt) for p in ws.regimes]


def _split(ws: Workspace) -> Tuple[List[Trajectory], List[Trajectory]]:
    """Training and verification halves of every regime; nothing is shared between them."""
    halves = [split_trajectory(t, ws.config.split_fraction) for t in _load_regimes(ws)]
    return [h[0] for h in halves], [h[1] for h in halves]


def _lifted(trajectories: Sequence[Trajectory], ws: Workspace) -> LiftedSnapshotSet:
    dictionary = ws.config.observables
    return LiftedSnapshotSet.concat([lift(t, dictionary) for t in trajectories])


def _load_full(ws: Workspace) -> LinearPredictor:
    ws.hashes([ws.full_model])
    return storage.load_model(ws.full_model)


def _spectrum(ws: Workspace) -> Tuple[LinearPredictor, KoopmanSpectrum]:
    model = _load_full(ws)
    training, _ = _split(ws)
    return model, spectrum(model, _lifted(training, ws), ws.config.reduce.eig_condition_cap)


def _mode_counts(ws: Workspace, spec: KoopmanSpectrum) -> List[int]:
    """Configured reduced sizes that are smaller than the full model."""
    counts = [n for n in ws.config.reduce.mode_counts if n is not None]
    if ws.config.reduce.power_fraction is not None:
        counts.append(len(select_by_power_fraction(spec, ws.config.reduce.power_fraction)))
    kept = []
    for n in sorted(set(counts)):
        if n >= len(spec):
            logger.warning('mode count %d is not below the model dimension %d, skipped', n, len(spec))
            continue
        kept.append(n)
    return kept


def _models(ws: Workspace) -> List[Tuple[str, LinearPredictor]]:
    """The full model and every reduced model recorded by the reduce stage, smallest first."""
    models = [('full', _load_full(ws))]
    recorded = sorted(int(key[len('models/reduced_n'):-len('.json')]) for key in ws.manifest.entries
                      if key.startswith('models/reduced_n') and key.endswith('.json'))
    if not recorded:
        logger.warning('no reduced models recorded, using the full model only')
    for n in recorded:
        ws.hashes([ws.reduced_model(n)])
        models.append((f'n{n}', storage.load_model(ws.reduced_model(n))))
    return models


def _step_regime(config: ExperimentConfig) -> int:
    """Index of the step-input regime, the one the rollout reconstruction replays."""
    kinds = [regime.kind for regime in config.regimes]
    if 'random_steps' in kinds:
        return kinds.index('random_steps')
    logger.warning('no random_steps regime configured, replaying regime %d', len(kinds))
    return len(kinds) - 1


def cmd_collect(config: ExperimentConfig) -> List[Path]:
    """Drives the plant from its settled equilibrium with both training regimes."""
    ws = Workspace(config)
    cfg = config.plant
    seeds = config.stage_seeds()
    x0 = settle(cfg)
    written = []
    for i, regime in enumerate(config.regimes, start=1):
        if regime.duration == 0:
            logger.warning('regime %d has zero duration, only the initial sample is written', i)
            trajectory = Trajectory(sample_dt=cfg.sample_dt, states=observe(x0)[None, :],
                                    inputs=np.empty((0, INPUT_DIM)))
        else:
            spec = regime.signal(cfg.sample_dt, seeds[f'regime{i}'])
            u = generate(spec)
            digest = storage.write_inputs(ws.signal(i), spec.times, u, exhaust_of(u))
            written.append(ws.record(ws.signal(i), digest))
            trajectory, _ = simulate(x0, u, cfg, seed=seeds[f'noise{i}'])
            trajectory = trajectory.aligned()

        digest = storage.write_trajectory(ws.regime(i), trajectory)
        written.append(ws.record(ws.regime(i), digest))
    return written


def cmd_train(config: ExperimentConfig) -> List[Path]:
    ws = Workspace(config)
    training, _ = _split(ws)
    fixed_point = None
    if config.anchor_equilibrium:
        fixed_point = control.initial_lifted_state(observe(settle(config.plant))[None, :], config.observables)
    model = fit(_lifted(training, ws), config.rcond, fixed_point)
    digest = storage.save_model(ws.full_model, model, ws.hashes(ws.regimes))
    return [ws.record(ws.full_model, digest, ws.regimes)]


def cmd_spectrum(config: ExperimentConfig) -> List[Path]:
    ws = Workspace(config)
    model, spec = _spectrum(ws)
    counts = _mode_counts(ws, spec)
    selections = {n: set(select_modes(spec, n)) for n in counts}
    omega = spec.continuous_eigenvalues(model.sample_dt)
    cumulative = np.cumsum(spec.mode_powers) / max(spec.mode_powers.sum(), np.finfo(float).tiny)

    header = ['rank', 'index', 're', 'im', 'abs', 'power', 'cumulative_power', 'omega_re', 'omega_im']
    header += [f'kept_n{n}' for n in counts]
    rows = []
    for i, lam in enumerate(spec.eigenvalues):
        row = [i, int(spec.permutation[i]), lam.real, lam.imag, abs(lam), spec.mode_powers[i], cumulative[i],
               omega[i].real, omega[i].imag]
        rows.append(row + [int(i in selections[n]) for n in counts])

    path = ws.report('spectrum.csv')
    return [ws.record(path, storage.write_table(path, header, rows), [ws.full_model] + ws.regimes)]


def cmd_reduce(config: ExperimentConfig) -> List[Path]:
    ws = Workspace(config)
    model, spec = _spectrum(ws)
    sources = [ws.full_model] + ws.regimes
    written, rows = [], []
    for n in _mode_counts(ws, spec):
        rm = project(model, spec, select_modes(spec, n), config.reduce.basis_condition_cap)
        residue = imaginary_residue(model, rm)
        digest = storage.save_model(ws.reduced_model(n), rm, ws.hashes(sources))
        written.append(ws.record(ws.reduced_model(n), digest, sources))
        rows.append([n, rm.dim, rm.cumulative_power, residue])

    path = ws.report('reduction.csv')
    digest = storage.write_table(path, ['requested', 'kept', 'cumulative_power', 'imaginary_residue'], rows)
    written.append(ws.record(path, digest, sources))
    return written


def _targets(ws: Workspace, training: Sequence[Trajectory]) -> List[np.ndarray]:
    reference = training[0]
    return [reference.states[int(round(f * (len(reference) - 1)))] for f in ws.config.control.pose_fractions]


def cmd_control(config: ExperimentConfig) -> List[Path]:
    """
    Plans open-loop inputs towards each target pose with the full and every reduced model,
    replays the plans on the plant from the settled equilibrium and scores the pose error.
    """
    ws = Workspace(config)
    settings = config.control
    training, _ = _split(ws)
    models = _models(ws)
    sources = [ws.full_model] + ws.regimes
    sources += [ws.reduced_model(int(label[1:])) for label, _ in models if label != 'full']

    x0 = settle(config.plant)
    x0_obs = observe(x0)
    z0 = control.initial_lifted_state(x0_obs[None, :], config.observables)
    times = np.arange(settings.horizon) * config.plant.sample_dt
    Q = settings.q_weight * np.eye(config.plant.state_dim)
    R = settings.r_weight * np.eye(INPUT_DIM)

    written, rows = [], []
    for p, x_ref in enumerate(_targets(ws, training), start=1):
        u_ref = control.steady_state_feedforward(training[0], x_ref) if settings.feedforward == 'training' else None
        for label, model in models:
            try:
                lqr = control.design(model, Q, R, x_ref=x_ref, u_bounds=settings.u_bounds, horizon=settings.horizon,
                                     u_ref=u_ref, steady_state=settings.feedforward == 'model',
                                     state_regularization=settings.state_regularization,
                                     method=settings.dare_method)
                plan = control.plan_open_loop(lqr, model, z0)
                deployed = control.deploy(config.plant, x0, plan.inputs)
                curve = pose_error_curve(deployed, x_ref, x0_obs)
            except exceptions.NumericalError as err:
                logger.warning('pose %d with model %s failed: %s', p, label, err)
                rows.append([p, label, model.dim, float('nan'), float('nan'), float('nan'), float('nan'),
                             float('nan'), type(err).__name__])
                continue

            name = f'pose{p}_{label}.csv'
            outputs = [
                (ws.root / 'plans' / name, storage.write_inputs(ws.root / 'plans' / name, times, plan.inputs)),
                (ws.root / 'deployed' / name, storage.write_trajectory(ws.root / 'deployed' / name, deployed)),
                (ws.report(name), storage.write_table(ws.report(name), ['t', 'e', 'e_m'],
                                                      zip(curve.times, curve.errors, curve.errors_m))),
            ]
            written.extend(ws.record(path, digest, sources) for path, digest in outputs)
            rows.append([p, label, model.dim, lqr.closed_loop_radius, plan.saturation_fraction,
                         control.plan_cost(lqr, model, z0, plan.inputs), float(curve.errors[-1]),
                         curve.steady_state(), 'ok'])

    path = ws.report('control.csv')
    header = ['pose', 'model', 'dim', 'closed_loop_radius', 'saturation', 'cost', 'final_error',
              'steady_state_error', 'status']
    written.append(ws.record(path, storage.write_table(path, header, rows), sources))
    return written


def cmd_evaluate(config: ExperimentConfig) -> List[Path]:
    ws = Workspace(config)
    settings = config.evaluate
    training, verification = _split(ws)
    if settings.verify_on_training:
        logger.warning('scoring on the training data, errors are not held-out estimates')
        verification = training
    models = _models(ws)
    sources = [ws.full_model] + ws.regimes
    sources += [ws.reduced_model(int(label[1:])) for label, _ in models if label != 'full']

    scored = _lifted(verification, ws)
    columns = ['e_rms', 'verification', 'excluded', 'samples']
    rows = []
    for label, model in models:
        row = single_step_error(model, scored).to_row()
        rows.append([label, model.dim] + [row[c] for c in columns])
    written = []
    path = ws.report('evaluation.csv')
    digest = storage.write_table(path, ['model', 'dim'] + columns, rows)
    written.append(ws.record(path, digest, sources))

    for kind, orders in (('delay', settings.delay_orders), ('monomial', settings.monomial_orders)):
        if not orders:
            continue
        cells = convergence_sweep(training, verification, kind, orders, settings.sample_counts, config.rcond,
                                  monomial_scale=settings.monomial_scale)
        path = ws.report(f'sweep_{kind}.csv')
        digest = storage.write_table(path, ['order', 'samples', 'e_rms', 'status'],
                                     [[c.order, c.samples, c.e_rms, c.status] for c in cells])
        written.append(ws.record(path, digest, ws.regimes))

    history = config.observables.history
    steps = int(round(settings.rollout_seconds / config.plant.sample_dt))
    reference = verification[_step_regime(config)]
    if len(reference) < history + steps:
        raise exceptions.InsufficientData(f'rollout of {steps} samples needs {history + steps} verification samples, '
                                          f'got {len(reference)}')
    actual = reference.window(history - 1, history + steps)
    header = ['t'] + [f'x_hat{i}' for i in range(1, config.plant.state_dim + 1)] + ['err']
    for label, model in models:
        reconstruction = rollout_reconstruction(model, reference.states[:history], actual.inputs[:steps], actual)
        path = ws.report(f'rollout_{label}.csv')
        table = np.column_stack([actual.times, reconstruction.predicted, reconstruction.errors])
        written.append(ws.record(path, storage.write_table(path, header, table), sources))
    return written


HANDLERS = {
    'collect': cmd_collect,
    'train': cmd_train,
    'spectrum': cmd_spectrum,
    'reduce': cmd_reduce,
    'control': cmd_control,
    'evaluate': cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help='experiment configuration (JSON)')
    common.add_argument('--out', help='output directory, overrides the configured one')
    common.add_argument('--seed', type=int, help='global seed, overrides the configured one')
    common.add_argument('--feedforward', choices=FEEDFORWARD_SOURCES,
                        help='steady-state input added to the LQR law, overrides the configured one')
    common.add_argument('--verify-on-training', action='store_true',
                        help='score the models on their own training data')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(prog='koopman-ctl',
                                     description='Koopman (HDMD) identification, reduction and LQR pipeline')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=HELP[command])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)

    try:
        config = ExperimentConfig.from_file(args.config).with_overrides(
            seed=args.seed, out=args.out, feedforward=args.feedforward, verify_on_training=args.verify_on_training)
        HANDLERS[args.command](config)
    except exceptions.KoopmanCtlError as err:
        logger.error('%s', err.with_stage(args.command))
        return exceptions.exit_code(err)
    except OSError as err:
        logger.error('%s: %s', args.command, err)
        return exceptions.exit_code(err)
    return 0


if __name__ == '__main__':
    sys.exit(main())
