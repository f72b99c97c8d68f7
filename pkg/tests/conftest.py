import numpy as np
import pytest

from reshuffle import BUILTIN, make_problem


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    monkeypatch.setenv("RESHUFFLE_BACKEND", request.param)
    return request.param


@pytest.fixture(params=sorted(BUILTIN))
def builtin(request):
    return make_problem(request.param)


def rng(seed=0):
    return np.random.default_rng(seed)
