"""The pbmin command line program.

Results are written to standard output as comma separated tables or as
``key=value`` lines. Diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from functools import partial
from pathlib import Path
from typing import TYPE_CHECKING, Callable, NoReturn

from rich.console import Console
from rich.logging import RichHandler

from . import certify, experiments, predict, tasks
from .bounds import (
    pac_bayes_kl_bound, pac_bayes_lambda_bound, pinsker_sqrt_bound)
from .core import (
    BoundConfig, DomainError, LossProfile, PosteriorWeights, gibbs_loss,
    kl_posterior_prior)
from .datafiles import (
    FORMATS, DataError, ModelFile, load_model, parse_dataset, parse_losses,
    save_model, write_table)
from .ensemble import ensemble_profile
from .learners import DEFAULT_EPOCHS, KINDS, LearnerSpec
from .optimizer import (
    DEFAULT_GRID_SIZE, alternate_minimize, gibbs_posterior, scan_lambda)
from .synthetic import DEFAULT_PROBE_SIZE, DISTRIBUTIONS

if TYPE_CHECKING:
    from collections.abc import Iterable

    from .ensemble import Dataset

log = logging.getLogger(__name__)

HELP_PATH = Path(__file__).parent / 'help.txt'

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DOMAIN = 3

EXAMPLES = {
    'nonconvex': certify.make_nonconvex_example,
    'two-minima': certify.make_two_minima_example,
}


class UsageError(Exception):
    """The command line is invalid."""


class ArgumentParser(argparse.ArgumentParser):
    """An argument parser that raises UsageError instead of exiting."""

    def error(self, message: str) -> NoReturn:
        """Report a usage problem."""
        raise UsageError(f'{self.prog}: {message}')


def help_text() -> tuple[str, str]:
    """Read the version and the descriptive text from help.txt."""
    version, lines = '', []
    for line in HELP_PATH.read_text(encoding='utf8').splitlines():
        if line.startswith(':version: '):
            *_, version = line.rpartition(' ')
        else:
            lines.append(line)
    return version, '\n'.join(lines).strip()


def emit(key: str, value) -> None:
    """Print a single ``key=value`` result line."""
    if isinstance(value, float):
        value = repr(float(value))
    print(f'{key}={value}')


def _add_learner_args(parser: argparse.ArgumentParser, default: str) -> None:
    parser.add_argument(
        '--learner', choices=KINDS, default=default,
        help=f'The weak learner (default {default}).')
    parser.add_argument(
        '--gamma', type=float,
        help='A fixed RBF bandwidth. By default a bandwidth is drawn for each'
             ' subset from a grid around the Jaakkola value.')
    parser.add_argument(
        '--epochs', type=int, default=DEFAULT_EPOCHS,
        help='Maximum kernel perceptron passes.')


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--delta', type=float, default=experiments.DEFAULT_DELTA,
        help='The confidence parameter (default 0.05).')
    parser.add_argument('--seed', type=int, default=0)


def _add_data_args(parser: argparse.ArgumentParser, *, test: bool) -> None:
    parser.add_argument('--data', type=Path, required=True)
    parser.add_argument('--format', choices=FORMATS, default='svmlight')
    parser.add_argument('--test', type=Path, required=test)


def _add_source_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument(
        '--losses', type=Path,
        help='A losses file: loss[,multiplicity[,prior_mass]] per line.')
    source.add_argument('--example', choices=sorted(EXAMPLES))
    source.add_argument('--model', type=Path)
    parser.add_argument('--n-eval', type=int)
    parser.add_argument(
        '--delta', type=float, default=experiments.DEFAULT_DELTA)
    parser.add_argument('--uniform', action='store_true',
                        help='Ignore prior masses in the losses file.')


def parse_args(sys_args: list[str] | None = None) -> argparse.Namespace:
    """Parse the command line arguments."""
    version, description = help_text()
    parser = ArgumentParser(
        prog='pbmin', epilog=description,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('--version', action='version', version=version)
    parser.add_argument(
        '-v', '--verbose', action='store_true', help='Log debug details.')
    parser.add_argument(
        '-q', '--quiet', action='store_true', help='Only log errors.')
    parser.add_argument(
        '--threads', type=int,
        help='Maximum worker threads (default $PBMIN_THREADS or CPU count).')

    # Testing support; let exceptions propagate instead of mapping them to
    # exit codes.
    add_hidden_arg = partial(parser.add_argument, help=argparse.SUPPRESS)
    add_hidden_arg('--debug', action='store_true')

    commands = parser.add_subparsers(
        dest='command', required=True, parser_class=ArgumentParser)

    p = commands.add_parser('train', help='Train and weight an ensemble.')
    _add_data_args(p, test=False)
    p.add_argument('--m', type=int, required=True)
    p.add_argument('--r', default='auto',
                   help="Subset size or 'auto' (d + 1, or sqrt(n) when"
                        ' d <= 3).')
    _add_run_args(p)
    _add_learner_args(p, 'kernel_perceptron')
    p.add_argument('--out', type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser('predict', help='Predict with a saved model.')
    p.add_argument('--model', type=Path, required=True)
    p.add_argument('--data', type=Path, required=True)
    p.add_argument('--format', choices=FORMATS, default='svmlight')
    p.add_argument('--mode', choices=predict.MODES, default='majority')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = commands.add_parser('bound', help='Evaluate bounds for losses.')
    p.add_argument('--losses', type=Path, required=True)
    p.add_argument('--n-eval', type=int, required=True)
    p.add_argument(
        '--delta', type=float, default=experiments.DEFAULT_DELTA)
    p.add_argument('--lambda', dest='lam', type=float)
    p.add_argument('--uniform', action='store_true')
    p.set_defaults(func=cmd_bound)

    p = commands.add_parser('scan', help='Tabulate F(lambda).')
    _add_source_args(p)
    p.add_argument('--grid-size', type=int, default=DEFAULT_GRID_SIZE)
    p.add_argument('--lambda-max', type=float, default=1.0)
    p.add_argument('--out', type=Path)
    p.set_defaults(func=cmd_scan)

    p = commands.add_parser(
        'certify', help='Test F(lambda) for strong quasiconvexity.')
    _add_source_args(p)
    p.add_argument(
        '--grid-steps', type=int, default=certify.DEFAULT_GRID_STEPS)
    p.set_defaults(func=cmd_certify)

    p = commands.add_parser('experiment', help='Run an experiment harness.')
    harnesses = p.add_subparsers(
        dest='harness', required=True, parser_class=ArgumentParser)

    h = harnesses.add_parser('heatmap')
    _add_data_args(h, test=True)
    _add_run_args(h)
    _add_learner_args(h, 'kernel_perceptron')
    h.add_argument('--m-count', type=int, default=experiments.HEATMAP_STEPS)
    h.add_argument(
        '--m-spacing', choices=('linear', 'geometric'), default='linear')
    h.add_argument('--r-count', type=int, default=experiments.HEATMAP_STEPS)
    h.add_argument('--r-min', type=int, default=2)
    h.add_argument('--r-max', type=int, help='Default d + 1.')
    h.add_argument('--baseline', type=float)
    h.add_argument('--out', type=Path)

    h = harnesses.add_parser('m_sweep')
    _add_data_args(h, test=True)
    _add_run_args(h)
    _add_learner_args(h, 'kernel_perceptron')
    h.add_argument('--r', type=int, help='Default d + 1.')
    h.add_argument('--m-count', type=int, default=experiments.HEATMAP_STEPS)
    h.add_argument(
        '--m-spacing', choices=('linear', 'geometric'), default='linear')
    h.add_argument('--m-max', type=int, help='Default n.')
    h.add_argument('--out', type=Path)

    h = harnesses.add_parser('max_m')
    _add_source_args(h)
    h.add_argument('--step', type=int, default=10)
    h.add_argument(
        '--grid-steps', type=int, default=certify.DEFAULT_GRID_STEPS)

    h = harnesses.add_parser('validity')
    h.add_argument(
        '--distribution', choices=sorted(DISTRIBUTIONS),
        default='noisy_threshold')
    h.add_argument('--dim', type=int)
    h.add_argument('--trials', type=int, default=1000)
    h.add_argument('--n', type=int, default=500)
    h.add_argument('--m', type=int, default=20)
    h.add_argument('--r', type=int, default=10)
    h.add_argument('--probe-size', type=int, default=DEFAULT_PROBE_SIZE)
    _add_run_args(h)
    _add_learner_args(h, 'stump')
    h.add_argument('--out', type=Path)

    h = harnesses.add_parser('predictor_compare')
    _add_data_args(h, test=True)
    h.add_argument('--m', type=int, required=True)
    h.add_argument('--r', default='auto')
    _add_run_args(h)
    _add_learner_args(h, 'kernel_perceptron')

    p.set_defaults(func=cmd_experiment)
    return parser.parse_args(sys_args if sys_args is not None
                             else sys.argv[1:])


def subset_size(text: str, data: Dataset) -> int:
    """Interpret an --r value."""
    if text == 'auto':
        return experiments.auto_subset_size(data.n, data.d)
    try:
        return int(text)
    except ValueError:
        raise UsageError(
            f"--r must be an integer or 'auto', not {text!r}") from None


def learner_spec(args: argparse.Namespace) -> LearnerSpec:
    """Create the learner specification from the command line."""
    return LearnerSpec(args.learner, args.gamma, epochs=args.epochs)


def load_train_test(args: argparse.Namespace) -> tuple[Dataset, Dataset]:
    """Load the --data and --test datasets."""
    train = parse_dataset(args.data, args.format)
    test = parse_dataset(args.test, args.format, n_features=train.d)
    return train, test


def load_profile(args: argparse.Namespace) -> tuple[LossProfile, BoundConfig]:
    """Create a loss profile from --losses, --example or --model."""
    if args.example:
        return EXAMPLES[args.example]()
    if args.model:
        model = load_model(args.model)
        delta = model.summary.get('delta', args.delta)
        return ensemble_profile(model.ensemble, delta, model.prior_masses)
    if args.n_eval is None:
        raise UsageError('--losses needs --n-eval')
    cfg = BoundConfig(args.n_eval, args.delta)
    return parse_losses(args.losses, args.n_eval, uniform=args.uniform), cfg


def _write_rows(
        out: Path | None, header: Iterable[str], rows: Iterable) -> None:
    if out:
        with out.open('wt', encoding='utf8', newline='') as f:
            write_table(f, header, rows)
    else:
        write_table(sys.stdout, header, rows)


def cmd_train(args: argparse.Namespace) -> int:
    """Train an ensemble, minimise its bound and save the model."""
    data = parse_dataset(args.data, args.format)
    test = None
    if args.test:
        test = parse_dataset(args.test, args.format, n_features=data.d)
    r = subset_size(args.r, data)
    result = experiments.run_pipeline(
        data, args.m, r, args.delta, args.seed, learner_spec(args),
        threads=args.threads)
    model = ModelFile(result.ensemble, result.posterior, result.summary())
    save_model(args.out, model)

    for key, value in result.summary().items():
        emit(key, value)
    if test is not None:
        ens, rho = result.ensemble, result.posterior
        for kind in predict.MODES:
            mode = predict.PredictionMode(kind, args.seed)
            emit(f'test_loss_{kind}', predict.test_loss(ens, rho, mode, test))
        emit('expected_randomized_loss',
             predict.expected_randomized_loss(ens, rho, test))
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    """Predict labels for a dataset using a saved model."""
    model = load_model(args.model)
    ens = model.ensemble
    data = parse_dataset(
        args.data, args.format, n_features=ens.hypotheses[0].dim)
    mode = predict.PredictionMode(args.mode, args.seed)
    predicted = predict.predict_labels(ens, model.posterior, mode, data.points)
    print('index,predicted,label')
    for i, (guess, label) in enumerate(
            zip(predicted.tolist(), data.labels.tolist())):
        print(f'{i},{guess},{label}')
    emit('test_loss', predict.test_loss(ens, model.posterior, mode, data))
    return EXIT_OK


def cmd_bound(args: argparse.Namespace) -> int:
    """Evaluate the bounds for a losses file.

    Bounds are given for rho equal to the prior and for the posterior found
    by alternating minimisation. With --lambda, the PAC-Bayes-lambda bound at
    that lambda is also given, for both rho = prior and rho_lambda.
    """
    cfg = BoundConfig(args.n_eval, args.delta)
    profile = parse_losses(args.losses, args.n_eval, uniform=args.uniform)
    prior = PosteriorWeights.prior_of(profile)
    emit('m', profile.hypothesis_count)
    emit('gibbs_loss', gibbs_loss(profile, prior))
    emit('pb_kl_bound', pac_bayes_kl_bound(profile, prior, cfg))
    emit('sqrt_bound', pinsker_sqrt_bound(profile, prior, cfg))
    if args.lam is not None:
        bound = pac_bayes_lambda_bound(profile, prior, args.lam, cfg)
        emit('lambda', args.lam)
        emit('lambda_bound', bound.value)
        emit('gibbs_loss_term', bound.gibbs_loss_term)
        emit('complexity_term', bound.complexity_term)
        rho = gibbs_posterior(profile, args.lam)
        emit('gibbs_lambda_bound',
             pac_bayes_lambda_bound(profile, rho, args.lam, cfg).value)

    trace = alternate_minimize(profile, cfg)
    rho = trace.final_posterior
    emit('optimal_lambda', trace.final_lambda)
    emit('optimal_bound', trace.final_bound)
    emit('optimal_kl', kl_posterior_prior(profile, rho))
    emit('optimal_pb_kl_bound', pac_bayes_kl_bound(profile, rho, cfg))
    emit('converged', trace.converged)
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    """Tabulate F(lambda) and report its local minima."""
    profile, cfg = load_profile(args)
    scan = scan_lambda(
        profile, cfg, args.grid_size, args.lambda_max, threads=args.threads)
    _write_rows(
        args.out, ('lambda', 'F'),
        zip(scan.grid.tolist(), scan.values.tolist()))
    emit('local_minima', len(scan.local_minima))
    emit('minima_lambdas', ';'.join(
        repr(float(scan.grid[i])) for i in scan.local_minima))
    emit('argmin_lambda', float(scan.grid[scan.argmin]))
    emit('min_F', float(scan.values[scan.argmin]))
    trace = alternate_minimize(profile, cfg)
    emit('alternating_lambda', trace.final_lambda)
    emit('alternating_F', trace.final_bound)
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    """Report whether F(lambda) is certified strongly quasiconvex."""
    profile, cfg = load_profile(args)
    if cfg.n_eff < certify.MIN_N or not profile.is_uniform_prior():
        log.info('Counting certificates do not apply; using the runtime'
                 ' conditions')
        report = certify.runtime_conditions(profile, cfg)
        emit('verdict',
             'certified' if report.certified else 'not_certified')
        emit('method', 'runtime_conditions')
        emit('lambda_floor', report.lambda_floor)
        emit('checked_points', len(report.checked))
        emit('failing_points', sum(
            1 for p in report.checked if not (p.cond9 or p.cond10)))
        return EXIT_OK

    cert = certify.search_certificate(profile, cfg, args.grid_steps)
    emit('verdict', cert.verdict)
    emit('method', cert.method)
    for name in ('a', 'b', 'k', 'mediocre_count', 'alpha', 'beta'):
        emit(name, getattr(cert, name))
    emit('k_zero_zero', certify.k_zero_zero(cfg.n_eff, cfg.delta))
    return EXIT_OK


def run_heatmap(args: argparse.Namespace) -> None:
    """Run the (m, r) heatmap harness."""
    train, test = load_train_test(args)
    r_max = min(args.r_max or train.d + 1, train.n - 1)
    result = experiments.heatmap(
        train, test,
        experiments.axis_values(1, train.n, args.m_count, args.m_spacing),
        experiments.axis_values(args.r_min, r_max, args.r_count),
        args.delta, args.seed, learner_spec(args),
        baseline=args.baseline, threads=args.threads)
    header = ['m', 'r', 'test_loss']
    if args.baseline is not None:
        header.append('difference')
    _write_rows(args.out, header, result.rows())


def run_validity(args: argparse.Namespace) -> None:
    """Run the bound validity harness."""
    cls = DISTRIBUTIONS[args.distribution]
    dist = cls() if args.dim is None else cls(d=args.dim)
    report = experiments.validity(
        dist, args.trials, args.n, args.m, args.r, args.delta, args.seed,
        learner_spec(args), probe_size=args.probe_size, threads=args.threads)
    if args.out:
        _write_rows(args.out, ('trial', 'gap'), enumerate(report.gaps))
    emit('trials', report.trials)
    emit('violations', report.violations)
    emit('violation_rate', report.violation_rate)
    emit('mean_gap', report.mean_gap)
    emit('delta', report.delta)


def run_predictor_compare(args: argparse.Namespace) -> None:
    """Run the prediction mode comparison harness."""
    train, test = load_train_test(args)
    report = experiments.predictor_compare(
        train, test, args.m, subset_size(args.r, train), args.delta,
        args.seed, learner_spec(args), threads=args.threads)
    _write_rows(None, ('mode', 'test_loss'), report.losses.items())
    emit('expected_randomized_loss', report.expected_randomized)
    emit('mass50_count', report.mass50)
    emit('bound', report.bound)
    emit('pb_kl_bound', report.pb_kl_bound)


def run_m_sweep(args: argparse.Namespace) -> None:
    """Run the m sweep harness."""
    train, test = load_train_test(args)
    r = args.r if args.r is not None else min(train.d + 1, train.n - 1)
    m_max = args.m_max or train.n
    rows = experiments.m_sweep(
        train, test,
        experiments.axis_values(1, m_max, args.m_count, args.m_spacing),
        r, args.delta, args.seed, learner_spec(args), threads=args.threads)
    _write_rows(
        args.out, ('m', 'test_loss', 'pb_kl_bound', 'bound', 'seconds'),
        ((row.m, row.test_loss, row.pb_kl_bound, row.bound, row.seconds)
         for row in rows))


def run_max_m(args: argparse.Namespace) -> None:
    """Find the largest certified m for a sample of losses."""
    profile, cfg = load_profile(args)
    losses = profile.expand().losses
    emit('max_certified_m', certify.max_certified_m(
        losses, cfg.n_eff, cfg.delta, step=args.step,
        grid_steps=args.grid_steps))
    emit('k_zero_zero', certify.k_zero_zero(cfg.n_eff, cfg.delta))
    emit('m', len(losses))


HARNESSES: dict[str, Callable[[argparse.Namespace], None]] = {
    'heatmap': run_heatmap,
    'm_sweep': run_m_sweep,
    'max_m': run_max_m,
    'validity': run_validity,
    'predictor_compare': run_predictor_compare,
}


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run one of the experiment harnesses."""
    HARNESSES[args.harness](args)
    return EXIT_OK


def setup_logging(args: argparse.Namespace) -> None:
    """Send log records to standard error via rich."""
    level = logging.WARNING
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    handler = RichHandler(
        console=Console(stderr=True), show_time=False, show_path=False)
    logging.basicConfig(
        level=level, format='%(message)s', handlers=[handler], force=True)


def run(sys_args: list[str] | None = None) -> int:
    """Run the program and return its exit status."""
    try:
        args = parse_args(sys_args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    setup_logging(args)
    try:
        tasks.thread_limit(args.threads)
        return args.func(args)
    except Exception as exc:           # pylint: disable=broad-exception-caught
        if args.debug:
            raise
        status = EXIT_USAGE
        if isinstance(exc, (DataError, OSError)):
            status = EXIT_DATA
        elif isinstance(exc, DomainError):
            status = EXIT_DOMAIN
        elif not isinstance(exc, (UsageError, ValueError)):
            raise
        print(f'pbmin: {exc}', file=sys.stderr)
        return status


def main():                                                  # pragma: no cover
    """Run the application."""
    sys.exit(run())
