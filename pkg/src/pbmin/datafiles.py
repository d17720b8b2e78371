"""Reading and writing data, losses and model files.

Dataset formats
    svmlight
        One point per line: ``label idx:val idx:val ...``. Indices are
        1-based and ascending. Missing features are zero. Text after a '#'
        is ignored.
    csv
        A header row containing a 'label' column. All other columns are
        numeric features.

Losses files
    One hypothesis entry per line: ``loss[,multiplicity[,prior_mass]]``.
    Commas or white space separate the fields. Blank lines and lines
    starting with '#' are ignored.

Model files
    A JSON object holding everything needed to predict, plus a summary of
    the bound that was achieved. Keys are sorted and floats are written with
    full precision, so a model file is a deterministic function of the
    training run.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar

import numpy as np

from .core import DomainError, LossProfile, PosteriorWeights
from .ensemble import Dataset, HypothesisEnsemble, SubsamplePlan
from .learners import LearnerSpec, TrainedClassifier

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator

log = logging.getLogger(__name__)

FORMATS = ('svmlight', 'csv')
MODEL_FORMAT_VERSION = 1


class DataError(Exception):
    """An input file is missing, unreadable or malformed."""

    def __init__(self, path, message: str, line: int | None = None):
        self.path = str(path)
        self.message = message
        self.line = line
        where = self.path if line is None else f'{self.path}:{line}'
        super().__init__(f'{where}: {message}')


def convert_labels(raw: list[str]) -> np.ndarray:
    """Convert label text to int, else float, else leave it as text."""
    for kind in (int, float):
        try:
            return np.array([kind(s) for s in raw])
        except ValueError:
            pass
    return np.array(raw)


class Parser:
    """Base for the dataset parsers."""

    # pylint: disable=too-few-public-methods
    def __init__(self, path, n_features: int | None = None):
        self.path = path
        self.n_features = n_features
        self.lineno = 0

    def fail(self, message: str) -> DataError:
        """Create an error for the line being parsed."""
        return DataError(self.path, message, self.lineno or None)

    def feature(self, text: str) -> float:
        """Convert one feature value, rejecting NaN and infinity."""
        try:
            value = float(text)
        except ValueError:
            raise self.fail(f'Bad feature value {text!r}') from None
        if not math.isfinite(value):
            raise self.fail(f'Feature value {text!r} is not finite')
        return value

    def load(self, f: io.TextIOBase) -> Dataset:
        """Load a dataset from an open text file."""
        raise NotImplementedError


class SvmlightParser(Parser):
    """The parser for svmlight (libsvm) format files."""

    # pylint: disable=too-few-public-methods
    def load(self, f: io.TextIOBase) -> Dataset:
        """Load a dataset from an open text file."""
        labels: list[str] = []
        rows: list[dict[int, float]] = []
        for self.lineno, rawline in enumerate(f, 1):
            line = rawline.split('#', 1)[0].strip()
            if not line:
                continue
            label, *pairs = line.split()
            labels.append(label)
            rows.append(self._parse_pairs(pairs))
        self.lineno = 0
        if not rows:
            raise self.fail('The file contains no data points')

        dim = max((max(row) for row in rows if row), default=0)
        if self.n_features is not None:
            if dim > self.n_features:
                raise self.fail(
                    f'A feature index of {dim} exceeds the declared'
                    f' {self.n_features} features')
            dim = self.n_features
        points = np.zeros((len(rows), dim))
        for i, row in enumerate(rows):
            for index, value in row.items():
                points[i, index - 1] = value
        return Dataset(points, convert_labels(labels))

    def _parse_pairs(self, pairs: list[str]) -> dict[int, float]:
        row: dict[int, float] = {}
        prev = 0
        for pair in pairs:
            index_text, sep, value_text = pair.partition(':')
            if not sep:
                raise self.fail(f'Expected index:value, found {pair!r}')
            try:
                index = int(index_text)
            except ValueError:
                raise self.fail(f'Bad feature index {index_text!r}') from None
            if index <= prev:
                raise self.fail(
                    'Feature indices must be positive and ascending')
            row[index] = self.feature(value_text)
            prev = index
        return row


class CsvParser(Parser):
    """The parser for CSV files with a 'label' column."""

    # pylint: disable=too-few-public-methods
    def load(self, f: io.TextIOBase) -> Dataset:
        """Load a dataset from an open text file."""
        reader = csv.reader(f)
        header = next(reader, None)
        self.lineno = 1
        if header is None:
            self.lineno = 0
            raise self.fail('The file is empty')
        header = [name.strip() for name in header]
        if header.count('label') != 1:
            raise self.fail("The header needs exactly one 'label' column")
        label_col = header.index('label')

        labels: list[str] = []
        rows: list[list[float]] = []
        for row in reader:
            self.lineno = reader.line_num
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise self.fail(
                    f'Expected {len(header)} fields, found {len(row)}')
            labels.append(row[label_col].strip())
            rows.append([
                self.feature(cell) for i, cell in enumerate(row)
                if i != label_col])
        self.lineno = 0
        if not rows:
            raise self.fail('The file contains no data points')
        dim = len(header) - 1
        if self.n_features is not None and self.n_features != dim:
            raise self.fail(
                f'Expected {self.n_features} features, found {dim}')
        return Dataset(np.array(rows).reshape(len(rows), dim),
                       convert_labels(labels))


class Loader:
    """Encapsulation of dataset file loading."""

    parsers: ClassVar[dict[str, type[Parser]]] = {
        'svmlight': SvmlightParser,
        'csv': CsvParser,
    }

    def __init__(self, path, fmt: str = 'svmlight'):
        if fmt not in self.parsers:
            raise DomainError(f'Unknown data format {fmt!r}')
        self.path = Path(path)
        self.fmt = fmt

    def load(self, n_features: int | None = None) -> Dataset:
        """Load the dataset.

        :raise DataError: If the file cannot be read or is malformed.
        """
        try:
            f = self.path.open(mode='rt', encoding='utf8', newline='')
        except OSError as exc:
            raise DataError(self.path, f'Could not open: {exc.strerror}') \
                from None
        parser = self.parsers[self.fmt](self.path, n_features)
        with f:
            try:
                data = parser.load(f)
            except DomainError as exc:
                raise DataError(self.path, str(exc)) from None
        log.info('Loaded %d points with %d features from %s',
                 data.n, data.d, self.path)
        return data


def parse_dataset(path, fmt: str = 'svmlight',
                  n_features: int | None = None) -> Dataset:
    """Load a dataset from a file."""
    return Loader(path, fmt).load(n_features)


def _label_text(label) -> str:
    return repr(label) if isinstance(label, float) else str(label)


def dataset_lines(data: Dataset, fmt: str = 'svmlight') -> Iterator[str]:
    """Generate the lines of a dataset file."""
    labels = [_label_text(label) for label in data.labels.tolist()]
    if fmt == 'csv':
        yield ','.join(['label'] + [f'f{i + 1}' for i in range(data.d)])
        for label, row in zip(labels, data.points.tolist()):
            yield ','.join([label] + [repr(v) for v in row])
    elif fmt == 'svmlight':
        for label, row in zip(labels, data.points.tolist()):
            pairs = [f'{i + 1}:{v!r}' for i, v in enumerate(row) if v != 0.0]
            yield ' '.join([label, *pairs])
    else:
        raise DomainError(f'Unknown data format {fmt!r}')


def write_dataset(path, data: Dataset, fmt: str = 'svmlight') -> None:
    """Save a dataset to a file."""
    with Path(path).open('wt', encoding='utf8', newline='') as f:
        for line in dataset_lines(data, fmt):
            f.write(f'{line}\n')


def parse_losses(path, n_eff: int, *, uniform: bool = False) -> LossProfile:
    """Load a loss profile from a losses file.

    :uniform: Ignore any prior mass column and use a uniform prior.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf8')
    except OSError as exc:
        raise DataError(path, f'Could not open: {exc.strerror}') from None

    losses: list[float] = []
    counts: list[int] = []
    masses: list[float | None] = []
    for lineno, rawline in enumerate(text.splitlines(), 1):
        line = rawline.strip()
        if not line or line.startswith('#'):
            continue
        fields = line.replace(',', ' ').split()
        if len(fields) > 3:
            raise DataError(path, 'Expected at most 3 fields', lineno)
        try:
            losses.append(float(fields[0]))
            counts.append(int(fields[1]) if len(fields) > 1 else 1)
            masses.append(float(fields[2]) if len(fields) > 2 else None)
        except ValueError as exc:
            raise DataError(path, str(exc), lineno) from None
    if not losses:
        raise DataError(path, 'The file contains no losses')

    try:
        if uniform or all(mass is None for mass in masses):
            return LossProfile.uniform(losses, counts, n_eff)
        if any(mass is None for mass in masses):
            raise DataError(
                path, 'Either every line or no line must give a prior mass')
        return LossProfile(losses, masses, counts, n_eff)
    except DomainError as exc:
        raise DataError(path, str(exc)) from None


def _float_list(values) -> list:
    return np.asarray(values, dtype=float).tolist()


def classifier_record(clf: TrainedClassifier) -> dict[str, Any]:
    """Convert a classifier into a JSON compatible dictionary."""
    record: dict[str, Any] = {
        'kind': clf.kind,
        'dim': clf.dim,
        'classes': list(clf.classes),
        'fallback_label': clf.fallback_label,
    }
    if clf.kind == 'kernel_perceptron':
        record.update(
            gamma=clf.gamma, points=_float_list(clf.points),
            signs=_float_list(clf.signs), coefs=_float_list(clf.coefs))
    elif clf.kind == 'stump':
        record.update(
            feature=clf.feature, threshold=clf.threshold,
            left_label=clf.left_label, right_label=clf.right_label)
    return record


def classifier_from_record(record: dict[str, Any]) -> TrainedClassifier:
    """Rebuild a classifier from its dictionary form."""
    kwargs = dict(record)
    kwargs['classes'] = tuple(kwargs.get('classes', ()))
    for name in ('points', 'signs', 'coefs'):
        if name in kwargs:
            kwargs[name] = np.array(kwargs[name], dtype=float)
    return TrainedClassifier(**kwargs)


@dataclass
class ModelFile:
    """A trained, weighted ensemble together with its bound summary.

    @ensemble:     The hypotheses and how they were trained.
    @posterior:    The posterior weight of each hypothesis.
    @summary:      Bound details; lambda, bound, pb_kl_bound, delta, n, r, m
                   and so on.
    @prior_masses: Explicit prior masses, or None for a uniform prior.
    """

    ensemble: HypothesisEnsemble
    posterior: PosteriorWeights
    summary: dict[str, Any] = field(default_factory=dict)
    prior_masses: np.ndarray | None = None

    def as_dict(self) -> dict[str, Any]:
        """Convert to the dictionary that is stored as JSON."""
        ens = self.ensemble
        spec = ens.spec
        prior: dict[str, Any] = {'kind': 'uniform'}
        if self.prior_masses is not None:
            prior = {'kind': 'explicit',
                     'masses': _float_list(self.prior_masses)}
        hypotheses = [
            {
                'classifier': classifier_record(clf),
                'subset': ens.plan.subsets[h].tolist(),
                'validation_loss': float(ens.validation_losses[h]),
                'posterior_weight': float(self.posterior.weights[h]),
            }
            for h, clf in enumerate(ens.hypotheses)]
        return {
            'format_version': MODEL_FORMAT_VERSION,
            'summary': self.summary,
            'learner': {
                'kind': spec.kind, 'gamma': spec.gamma,
                'gamma_grid': (
                    None if spec.gamma_grid is None
                    else list(spec.gamma_grid)),
                'epochs': spec.epochs,
            },
            'prior': prior,
            'seeds': {'subsample': ens.plan.seed},
            'n': ens.n,
            'r': ens.r,
            'hypotheses': hypotheses,
        }

    def to_json(self) -> str:
        """Produce the deterministic JSON text of the model."""
        return json.dumps(self.as_dict(), sort_keys=True, indent=1) + '\n'

    @classmethod
    def from_dict(cls, obj: dict[str, Any], path='<model>') -> ModelFile:
        """Rebuild a model from its dictionary form."""
        version = obj.get('format_version')
        if version != MODEL_FORMAT_VERSION:
            raise DataError(
                path, f'Unsupported model format version {version!r}')
        try:
            records = obj['hypotheses']
            plan = SubsamplePlan(
                tuple(np.array(rec['subset'], dtype=np.int64)
                      for rec in records),
                obj['seeds']['subsample'], obj['n'], obj['r'])
            learner = obj['learner']
            grid = learner.get('gamma_grid')
            spec = LearnerSpec(
                learner['kind'], learner.get('gamma'),
                None if grid is None else tuple(grid), learner['epochs'])
            ens = HypothesisEnsemble(
                [classifier_from_record(rec['classifier'])
                 for rec in records],
                plan,
                np.array([rec['validation_loss'] for rec in records]),
                spec)
            posterior = PosteriorWeights(
                np.array([rec['posterior_weight'] for rec in records]))
            prior = obj['prior']
            masses = None
            if prior['kind'] == 'explicit':
                masses = np.array(prior['masses'], dtype=float)
        except (KeyError, TypeError) as exc:
            raise DataError(path, f'Malformed model file: {exc!r}') from None
        except DomainError as exc:
            raise DataError(path, f'Invalid model file: {exc}') from None
        return cls(ens, posterior, dict(obj.get('summary', {})), masses)


def save_model(path, model: ModelFile) -> None:
    """Write a model file."""
    Path(path).write_text(model.to_json(), encoding='utf8')


def load_model(path) -> ModelFile:
    """Read a model file."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf8')
    except OSError as exc:
        raise DataError(path, f'Could not open: {exc.strerror}') from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(path, exc.msg, exc.lineno) from None
    if not isinstance(obj, dict):
        raise DataError(path, 'A model file must hold a JSON object')
    return ModelFile.from_dict(obj, path)


def write_table(f, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    """Write comma separated rows, with a header, to an open text file."""
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([
            repr(float(v)) if isinstance(v, float) else v for v in row])
