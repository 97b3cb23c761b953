import importlib
import itertools

import numpy as np
import pytest

from pessirank import _fallback
from pessirank.core import value


def _kernel_modules():
    mods = [pytest.param(_fallback, id="python")]
    try:
        mods.append(pytest.param(importlib.import_module("pessirank._speedups"), id="compiled"))
    except ImportError:
        mods.append(pytest.param(None, id="compiled", marks=pytest.mark.skip("extension not built")))
    return mods


@pytest.fixture(params=_kernel_modules())
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_best(params, k, items=None):
    """Best value over every K-permutation, by enumeration."""
    items = sorted(params.theta) if items is None else items
    return max(value(p, params) for p in itertools.permutations(items, k))
