"""Common test support code."""
from __future__ import annotations

import textwrap
from contextlib import suppress
from pathlib import Path
from tempfile import NamedTemporaryFile

import numpy as np

from pbmin import cli
from pbmin.core import BoundConfig, LossProfile

# Central difference step for derivative checks.
fd_step = 1e-5


def clean_text_lines(text: str) -> list[str]:
    """Dedent and remove unwanted blank lines from text.

    A line consisting of a single '|' character is treated as a blank line and
    may be used to add leading or tailing blank lines.
    """
    lines = [line.rstrip() for line in text.splitlines()]
    while lines and not lines[0]:
        lines.pop(0)
    while lines and not lines[-1]:
        lines.pop()
    lines = ['' if line.strip() == '|' else line for line in lines]
    return textwrap.dedent('\n'.join(lines)).splitlines()


def clean_text(text):
    """Dedent and remove unwanted blank lines from text."""
    return '\n'.join(clean_text_lines(text)) + '\n'


def populate(f, text):
    """Populate a data file using given text."""
    cleaned_text = clean_text(text)
    f.write_text(cleaned_text)
    return cleaned_text


class TempTestFile:
    """A named temporary file for testing.

    The file is closed straight away, so that the code under test can open
    it by name.
    """

    def __init__(self, *args, **kwargs):
        kwargs['delete'] = False
        f = NamedTemporaryFile(*args, **kwargs)
        self._name = f.name
        f.close()

    @property
    def name(self):
        """Get the name of the temporary file."""
        return self._name

    @property
    def path(self) -> Path:
        """Get the file's path."""
        return Path(self._name)

    def write_text(self, text: str) -> None:
        """Replace the file's contents."""
        self.path.write_text(text, encoding='utf8')

    def read_text(self) -> str:
        """Read the file's contents."""
        return self.path.read_text(encoding='utf8')

    def close(self):
        """Delete the file."""
        p = self.path
        if p.exists():
            with suppress(OSError):                          # pragma: no cover
                p.unlink()
        assert not p.exists()

    def __str__(self):
        return self.read_text()


def random_profile(
        rng: np.random.Generator, *, m_max: int = 50, n_max: int = 2000,
        n_min: int = 7, uniform: bool = True,
    ) -> tuple[LossProfile, BoundConfig]:
    """Create a random loss profile and matching configuration.

    Losses are multiples of 1/n, as they would be for a real zero-one loss.
    """
    m = int(rng.integers(1, m_max + 1))
    n = int(rng.integers(n_min, n_max + 1))
    losses = rng.integers(0, n + 1, size=m) / n
    prior = None
    if not uniform:
        raw = rng.random(m) + 0.01
        prior = raw / raw.sum()
    delta = float(rng.uniform(0.01, 0.5))
    return (
        LossProfile.from_losses(losses, n, prior), BoundConfig(n, delta))


def central_difference(func, x: float, h: float = fd_step) -> float:
    """Approximate a derivative by a central difference."""
    return (func(x + h) - func(x - h)) / (2.0 * h)


def run_cli(capsys, *args) -> tuple[int, str, str]:
    """Run the command line program, capturing its output.

    :return: The exit status, standard output and standard error text.
    """
    status = cli.run([str(a) for a in args])
    captured = capsys.readouterr()
    return status, captured.out, captured.err


def key_values(text: str) -> dict[str, str]:
    """Extract the ``key=value`` lines of some output."""
    values = {}
    for line in text.splitlines():
        key, sep, value = line.partition('=')
        if sep and ',' not in key:
            values[key] = value
    return values
