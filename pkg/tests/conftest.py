import numpy as np
import pytest

from curveflow import curve_core as cc


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def wiggly(rng):
    """A random analytic perturbation of the unit circle at N=64."""
    return cc.random_smooth_curve(rng, N=64, amp=0.1)


def relerr(a, b, floor=1e-12):
    return abs(a - b) / max(abs(b), floor)
