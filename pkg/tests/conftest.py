"""Custom test configuration."""
from __future__ import annotations

import pytest

from hypothesis import settings

from fixtures import (
    gaussian_data, infile, modelfile, outfile, rng, set_env, threshold_data)

__all__ = (
    'gaussian_data',
    'infile',
    'modelfile',
    'outfile',
    'rng',
    'set_env',
    'threshold_data',
)

settings.register_profile('default', deadline=None, max_examples=100)
settings.load_profile('default')


def pytest_configure(config: pytest.Config) -> None:
    """Perform any required global configuration."""
    config.addinivalue_line(
        'markers', 'slow: a long running acceptance check')
