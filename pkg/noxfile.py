"""Nox configuration."""

import nox                                       # pylint: disable=import-error


@nox.session(python=['3.9', '3.10', '3.11', '3.12'], reuse_venv=True)
def test(session):
    """Run the test suite."""
    session.install(
        'hypothesis',
        'numpy',
        'pytest',
        'pytest-xdist',
        'rich',
        'scipy',
    )
    session.install('-e', '.')
    args = ['pytest', *session.posargs, '-n', 'auto', '-vv', 'tests']
    session.run(*args)


@nox.session(reuse_venv=True)
def release(session):
    """Generate a release."""
    session.install(
        'build',
        'numpy',
        'rich',
        'scipy',
    )
    session.run('python', '-m', 'build')
