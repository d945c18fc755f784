"""Shared fixtures and a pure-Python reference for the exchange kernel."""

import numpy as np
import pytest

import yardsale as ys


def reference_sweep(wealth, net, p, f, rng):
    """Replay one timestep of the compiled kernel, draw for draw.

    Consumes the generator in exactly the same order as the kernel:
    Fisher-Yates shuffle of the initiator order, then per initiator a
    neighbor pick, a tie coin only on exact ties, and the bet outcome.
    Mutates ``wealth`` in place.
    """
    n = wealth.size
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    for a in perm:
        nbrs = net.neighbors_of(a)
        b = int(nbrs[int(rng.random() * nbrs.size)])
        wa, wb = wealth[a], wealth[b]
        if wa < wb:
            poor, rich = a, b
        elif wb < wa:
            poor, rich = b, a
        elif rng.random() < 0.5:
            poor, rich = a, b
        else:
            poor, rich = b, a
        wp = wealth[poor]
        stake = f * wp
        if rng.random() < p:
            wealth[poor] = wp * (1.0 + f)
            wealth[rich] = wealth[rich] - stake
        else:
            wealth[poor] = wp * (1.0 - f)
            wealth[rich] = wealth[rich] + stake


@pytest.fixture(scope="session")
def ring400():
    return ys.make_ring(400)


@pytest.fixture(scope="session")
def small_ring():
    return ys.make_ring(12)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
