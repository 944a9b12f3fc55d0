"""Fixed composite Simpson rule used for every integral in the package."""

import math

import numpy as np

DEFAULT_STEP = 0.005
TAIL_PAD = 10.0


def simpson_grid(lo, hi, step=DEFAULT_STEP):
    """Nodes and weights of composite Simpson on [lo, hi].

    The interval count is the smallest even number giving spacing <= step.
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    m = max(2, math.ceil((hi - lo) / step))
    m += m % 2
    x = np.linspace(lo, hi, m + 1)
    h = (hi - lo) / m
    w = np.full(m + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (h / 3.0)


def real_line_grid(radius, step=DEFAULT_STEP):
    """Grid on [-(radius + 10), radius + 10] for integrals against N(mu, 1) mixtures."""
    r = float(radius) + TAIL_PAD
    return simpson_grid(-r, r, step)
