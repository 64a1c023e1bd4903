"""Shared fixtures: the frozen oracle table and coefficient builders.

Derived expected values live in oracles/oracles.json, generated by
oracles/gen_oracles.py with 50-digit arithmetic and no imports from the
package under test. Tests compare against those frozen doubles; live
oracles (scipy quadrature, matrix exponentials, dense solves, brute-force
enumeration) are built inside the tests that need them.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from racemix import DEFAULT_PARAMS, build_light_field, lap_coefficients

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def params():
    return DEFAULT_PARAMS


def coeffs_at(Is=2000.0, q=0.001, N=11, T=1000.0, h=0.4, params=DEFAULT_PARAMS):
    """Lap coefficients at a point, defaulting to the reference setting."""
    return lap_coefficients(build_light_field(Is, q, h, N), params, T)


def random_coeffs(rng, N=None, T_lo=1.0, T_hi=1000.0):
    """A random physical coefficient instance for property tests."""
    n = int(N) if N is not None else int(rng.integers(3, 10))
    Is = float(rng.uniform(0.0, 2500.0))
    q = float(10.0 ** rng.uniform(-3, 0))
    T = float(10.0 ** rng.uniform(np.log10(T_lo), np.log10(T_hi)))
    return coeffs_at(Is=Is, q=q, N=n, T=T)


def rel_close(actual, expected, rel):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = np.maximum(np.abs(expected), np.finfo(np.float64).tiny)
    return bool(np.all(np.abs(actual - expected) <= rel * scale))
