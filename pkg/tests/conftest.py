"""Shared helpers: small random problem instances with feasible RDARS states."""

import numpy as np
import pytest

from rdars_isac.channel import ChannelSet, RdarsState


def complex_normal(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(rng, m, n, k) -> ChannelSet:
    return ChannelSet(
        h_br=complex_normal(rng, n, m),
        h_bu=complex_normal(rng, k, m),
        h_ru=complex_normal(rng, k, n),
        h_bt=complex_normal(rng, m),
        h_rt=complex_normal(rng, n),
        gains={},
        user_positions=np.zeros((k, 3)),
    )


def random_state(rng, n, a, aligned=True) -> RdarsState:
    """Unit-modulus phases, binary selection, distinct one-hot columns.

    aligned=False decouples the column support from the diagonal support so
    the selection penalty is active.
    """
    phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n))
    a_vec = np.zeros(n, dtype=np.int64)
    a_vec[rng.choice(n, a, replace=False)] = 1
    rows = np.flatnonzero(a_vec) if aligned else rng.choice(n, a, replace=False)
    a_cols = np.zeros((n, a), dtype=np.int64)
    for j, r in enumerate(rows):
        a_cols[r, j] = 1
    return RdarsState(phi=phi, a_vec=a_vec, a_cols=a_cols)


def random_instance(rng, m=3, n=5, k=2, a=2, aligned=True):
    """(channels, state, w, f, s, rho1, rho2) with O(1) magnitudes."""
    channels = random_channels(rng, m, n, k)
    state = random_state(rng, n, a, aligned)
    w = complex_normal(rng, m)
    f = complex_normal(rng, m + a, k)
    s = complex_normal(rng, k, k)
    rho1 = float(rng.uniform(0.2, 5.0))
    rho2 = float(rng.uniform(0.2, 5.0))
    return channels, state, w, f, s, rho1, rho2


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
