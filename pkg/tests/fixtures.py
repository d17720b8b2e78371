"""Common test fixtures."""
from __future__ import annotations

from contextlib import suppress

import numpy as np

import pytest

from support import TempTestFile

from pbmin import tasks
from pbmin.ensemble import Dataset
from pbmin.synthetic import NoisyThreshold, TwoGaussians


def temp_file(suffix: str) -> TempTestFile:
    """Provide a temporary file during test execution.

    :suffix:
        Text appended to the end of the file name. Typically just the extension
        (for example '.txt').
    """
    f = TempTestFile(suffix=suffix, mode='w+t')
    yield f
    with suppress(FileNotFoundError):
        f.close()


@pytest.fixture(autouse=True)
def set_env(monkeypatch):
    """Set up the environment for these tests."""
    monkeypatch.delenv(tasks.ENV_THREADS, raising=False)


@pytest.fixture
def infile() -> TempTestFile:
    """Provide a temporary input file during test execution."""
    yield from temp_file('in.txt')


@pytest.fixture
def outfile() -> TempTestFile:
    """Provide a temporary output file during test execution."""
    yield from temp_file('out.txt')


@pytest.fixture
def modelfile() -> TempTestFile:
    """Provide a temporary model file during test execution."""
    yield from temp_file('model.json')


@pytest.fixture
def rng() -> np.random.Generator:
    """Provide a seeded random number generator."""
    return np.random.default_rng(20231107)


@pytest.fixture
def threshold_data() -> tuple[Dataset, Dataset]:
    """Provide a small noisy threshold training set and test set."""
    dist = NoisyThreshold(d=2, eta=0.1)
    return dist.sample(300, 1), dist.sample(500, 2)


@pytest.fixture
def gaussian_data() -> tuple[Dataset, Dataset]:
    """Provide a small two Gaussian training set and test set."""
    dist = TwoGaussians(d=5, mu=0.6)
    return dist.sample(200, 3), dist.sample(400, 4)
