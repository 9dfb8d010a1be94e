"""Interval estimates and fits used by the experiment code."""

from typing import NamedTuple

import numpy as np
from scipy import stats


def wilson_interval(successes, trials, z=3.0):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    phat = successes / trials
    den = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / den
    half = z * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def binomial_sigma(phat, trials):
    return float(np.sqrt(max(phat * (1 - phat), 0.0) / trials)) if trials > 0 else float("inf")


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    stderr: float


def linear_fit(x, y):
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), float(res.stderr))


def log_linear_fit(x, prob):
    """Fit ``log(prob) = intercept + slope * x`` over entries with ``prob > 0``."""
    x = np.asarray(x, float)
    prob = np.asarray(prob, float)
    keep = prob > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive probabilities to fit")
    return linear_fit(x[keep], np.log(prob[keep]))
