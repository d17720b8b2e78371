"""Reading and writing dataset, losses and model files."""
from __future__ import annotations

import io
import json

import numpy as np
import pytest

from support import populate

from pbmin.core import DomainError, PosteriorWeights
from pbmin.datafiles import (
    DataError, ModelFile, load_model, parse_dataset, parse_losses,
    save_model, write_dataset, write_table)
from pbmin.ensemble import build_ensemble, draw_subsamples
from pbmin.experiments import run_pipeline
from pbmin.learners import LearnerSpec
from pbmin.predict import PredictionMode, predict_labels


def test_svmlight_basics(infile):
    """Sparse rows are expanded with zeros."""
    populate(infile, '''
        # A comment line.
        +1 1:0.5 3:2
        -1 2:1.25   # trailing comment
        |
        1
    ''')
    data = parse_dataset(infile.name)
    assert data.labels.tolist() == [1, -1, 1]
    assert data.points.tolist() == [
        [0.5, 0.0, 2.0], [0.0, 1.25, 0.0], [0.0, 0.0, 0.0]]


def test_svmlight_declared_features(infile):
    """A declared feature count pads or rejects rows."""
    populate(infile, '''
        1 2:1
        2 1:1
    ''')
    assert parse_dataset(infile.name, n_features=4).d == 4
    with pytest.raises(DataError, match='exceeds'):
        parse_dataset(infile.name, n_features=1)


def test_svmlight_labels(infile):
    """Labels become int, float or text, in that order of preference."""
    populate(infile, '''
        cat 1:1
        dog 1:2
    ''')
    assert parse_dataset(infile.name).labels.tolist() == ['cat', 'dog']
    populate(infile, '''
        0.5 1:1
        2 1:2
    ''')
    assert parse_dataset(infile.name).labels.tolist() == [0.5, 2.0]


@pytest.mark.parametrize('text, line, message', [
    ('1 1:1\n1 2:x\n', 2, 'Bad feature value'),
    ('1 1:1\n1 3:1 2:1\n', 2, 'ascending'),
    ('1 1:1\n\n1 0:1\n', 3, 'ascending'),
    ('1 1:1\n1 1:nan\n', 2, 'not finite'),
    ('1 a:1\n', 1, 'Bad feature index'),
    ('1 1=1\n', 1, 'index:value'),
])
def test_svmlight_errors(infile, text, line, message):
    """Errors report the file and line number."""
    infile.write_text(text)
    with pytest.raises(DataError, match=message) as info:
        parse_dataset(infile.name)
    assert info.value.line == line
    assert str(info.value).startswith(f'{infile.name}:{line}: ')


def test_svmlight_empty(infile):
    """A file with no data is an error."""
    populate(infile, '''
        # Nothing here.
    ''')
    with pytest.raises(DataError, match='no data'):
        parse_dataset(infile.name)


def test_csv_basics(infile):
    """The label column may be anywhere."""
    populate(infile, '''
        x,label,y
        1.5,a,2
        |
        -1,b,0
    ''')
    data = parse_dataset(infile.name, 'csv')
    assert data.labels.tolist() == ['a', 'b']
    assert data.points.tolist() == [[1.5, 2.0], [-1.0, 0.0]]


@pytest.mark.parametrize('text, line, message', [
    ('x,y\n1,2\n', 1, "one 'label'"),
    ('label,label\n1,2\n', 1, "one 'label'"),
    ('label,x\n1,2\n1\n', 3, 'Expected 2 fields'),
    ('label,x\n1,2\n1,z\n', 3, 'Bad feature value'),
    ('label,x\n1,inf\n', 2, 'not finite'),
])
def test_csv_errors(infile, text, line, message):
    """CSV errors report the line number."""
    infile.write_text(text)
    with pytest.raises(DataError, match=message) as info:
        parse_dataset(infile.name, 'csv')
    assert info.value.line == line


def test_csv_feature_count(infile):
    """A declared feature count must match the header."""
    populate(infile, '''
        label,x,y
        1,2,3
    ''')
    with pytest.raises(DataError, match='Expected 3 features'):
        parse_dataset(infile.name, 'csv', n_features=3)


def test_missing_file():
    """A missing file is a data error."""
    with pytest.raises(DataError, match='Could not open'):
        parse_dataset('/no/such/file.txt')
    with pytest.raises(DataError, match='Could not open'):
        parse_losses('/no/such/file.txt', 10)
    with pytest.raises(DataError, match='Could not open'):
        load_model('/no/such/file.json')


def test_unknown_format(infile):
    """Only the known formats are accepted."""
    with pytest.raises(DomainError):
        parse_dataset(infile.name, 'arff')


@pytest.mark.parametrize('fmt', ['svmlight', 'csv'])
def test_write_and_read_dataset(outfile, threshold_data, fmt):
    """A written dataset reads back exactly."""
    train, _ = threshold_data
    write_dataset(outfile.name, train, fmt)
    data = parse_dataset(outfile.name, fmt, n_features=train.d)
    assert np.array_equal(data.points, train.points)
    assert np.array_equal(data.labels, train.labels)


def test_losses_file(infile):
    """Losses may be compressed and may carry prior masses."""
    populate(infile, '''
        # loss, multiplicity
        0.0
        0.1, 4
    ''')
    profile = parse_losses(infile.name, 200)
    assert profile.entries == [(0.0, 0.2, 1), (0.1, 0.2, 4)]
    assert profile.n_eff == 200

    populate(infile, '''
        0.2 1 0.25
        0.4 3 0.25
    ''')
    profile = parse_losses(infile.name, 50)
    assert profile.prior_masses.tolist() == [0.25, 0.25]
    assert parse_losses(infile.name, 50, uniform=True).is_uniform_prior()


@pytest.mark.parametrize('text, message', [
    ('0.1 1 0.5 9\n', 'at most 3'),
    ('abc\n', 'could not convert'),
    ('0.1 x\n', 'invalid literal'),
    ('# nothing\n', 'no losses'),
    ('0.1 1 0.5\n0.2\n', 'Either every line'),
    ('1.5\n', 'Every loss'),
    ('0.1 1 0.3\n0.2 1 0.3\n', 'total mass'),
])
def test_losses_file_errors(infile, text, message):
    """Malformed losses files are data errors."""
    infile.write_text(text)
    with pytest.raises(DataError, match=message):
        parse_losses(infile.name, 10)


def test_model_round_trip(modelfile, threshold_data):
    """A reloaded model predicts exactly as the original did."""
    train, test = threshold_data
    result = run_pipeline(
        train, 20, 15, 0.05, 3, LearnerSpec('stump'), threads=1)
    model = ModelFile(result.ensemble, result.posterior, result.summary())
    save_model(modelfile.name, model)
    loaded = load_model(modelfile.name)

    for kind in ('majority', 'uniform', 'best_h', 'randomized'):
        mode = PredictionMode(kind, 5)
        assert np.array_equal(
            predict_labels(loaded.ensemble, loaded.posterior, mode,
                           test.points),
            predict_labels(result.ensemble, result.posterior, mode,
                           test.points))
    assert loaded.summary == json.loads(json.dumps(result.summary()))
    assert loaded.to_json() == model.to_json()


def test_kernel_model_round_trip(modelfile, gaussian_data):
    """Kernel perceptrons survive a save and load unchanged."""
    train, test = gaussian_data
    ens = build_ensemble(
        train, draw_subsamples(train.n, 6, 8, seed=2), LearnerSpec(),
        threads=1)
    rho = PosteriorWeights(np.full(6, 1 / 6))
    model = ModelFile(ens, rho, {}, np.full(6, 1 / 6))
    save_model(modelfile.name, model)
    loaded = load_model(modelfile.name)
    for before, after in zip(ens.hypotheses, loaded.ensemble.hypotheses):
        assert np.array_equal(
            before.predict_many(test.points), after.predict_many(test.points))
    assert loaded.prior_masses.tolist() == [1 / 6] * 6
    assert loaded.ensemble.spec == ens.spec


def test_bad_model_files(modelfile):
    """Malformed model files are data errors."""
    modelfile.write_text('{"format_version": 1,')
    with pytest.raises(DataError):
        load_model(modelfile.name)
    modelfile.write_text('[1, 2]')
    with pytest.raises(DataError, match='JSON object'):
        load_model(modelfile.name)
    modelfile.write_text('{"format_version": 99}')
    with pytest.raises(DataError, match='version'):
        load_model(modelfile.name)
    modelfile.write_text('{"format_version": 1}')
    with pytest.raises(DataError, match='Malformed'):
        load_model(modelfile.name)


def test_write_table():
    """Floats are written with full precision."""
    f = io.StringIO()
    write_table(f, ['lambda', 'F'], [(0.1, np.float64(1 / 3)), (1, 'x')])
    assert f.getvalue() == 'lambda,F\n0.1,0.3333333333333333\n1,x\n'
