import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from evtr import _pykernels, kernels  # noqa: E402

try:
    from evtr import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
_NAMES = ("accumulate_packed", "stamp_events", "window_packed", "compress_packed")


@pytest.fixture(params=[name for name, _ in BACKENDS])
def backend(request, monkeypatch):
    """Route ``evtr.kernels`` to one implementation for the duration of a test."""
    mod = dict(BACKENDS)[request.param]
    for name in _NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
