"""Synthetic distributions and a surrogate riskmap for validation campaigns.

All fixtures are bounded so an essential bound is known exactly, and all
are cheap enough to draw tens of thousands of samples for oracle truths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidInput
from .risk_core import empirical_cvar, empirical_evar, empirical_var


@dataclass(frozen=True)
class Distribution:
    """A sampler with a known essential upper bound ``ell``."""

    name: str
    ell: float

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def truth(self, alpha: float, rng: np.random.Generator, n: int = 20000) -> dict:
        """Monte-Carlo reference values of VaR_alpha, CVaR_alpha and EVaR_alpha."""
        x = self.draw(n, rng)
        return {
            "var": empirical_var(x, alpha),
            "cvar": empirical_cvar(x, alpha),
            "evar": empirical_evar(x, alpha),
            "mean": float(np.mean(x)),
        }


@dataclass(frozen=True)
class Mixture(Distribution):
    """Clipped Gaussian mixture on ``[low, ell]``."""

    weights: Tuple[float, ...] = (0.6, 0.3, 0.1)
    means: Tuple[float, ...] = (-0.2, -0.05, 0.07)
    scales: Tuple[float, ...] = (0.04, 0.03, 0.02)
    low: float = -0.5

    def draw(self, n, rng):
        w = np.asarray(self.weights) / np.sum(self.weights)
        comp = rng.choice(len(w), size=n, p=w)
        x = rng.normal(np.asarray(self.means)[comp], np.asarray(self.scales)[comp])
        return np.clip(x, self.low, self.ell)


@dataclass(frozen=True)
class Constant(Distribution):
    value: float = 0.0

    def draw(self, n, rng):
        return np.full(n, self.value)


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float = 0.0

    def draw(self, n, rng):
        return rng.uniform(self.low, self.ell, size=n)


# negated-robustness stand-in: bounded by 0.1 like -R
ROBUSTNESS_MIXTURE = Mixture("mixture", ell=0.1)

FIXTURES = {
    "mixture": ROBUSTNESS_MIXTURE,
    "wide-mixture": Mixture(
        "wide-mixture", ell=5.0, weights=(0.5, 0.35, 0.15), means=(0.0, 2.0, 4.0), scales=(0.5, 0.4, 0.3), low=-2.0
    ),
    "constant": Constant("constant", ell=1.0, value=0.5),
    "uniform": Uniform("uniform", ell=1.0, low=0.0),
}


def get_fixture(name: str) -> Distribution:
    try:
        return FIXTURES[name]
    except KeyError:
        raise InvalidInput(f"unknown distribution fixture {name!r}; choose from {sorted(FIXTURES)}") from None


def surrogate_riskmap(params, seed: int, noise: float = 0.004) -> float:
    """Cheap stand-in for the simulated riskmap, valued in [-0.1, 0.1].

    A smooth bowl in normalized parameter space with a ridge in the barrier
    decay, plus noise drawn from ``seed`` to mimic inner-campaign randomness.
    """
    p1, p2, p3, p4 = (params.p1, params.p2, params.p3, params.p4) if hasattr(params, "p1") else params
    u = np.array([(p1 - 0.2) / 4.8, (p2 - 0.2) / 4.8, (p3 - 0.2) / 4.8, math.log(p4 / 0.1) / math.log(2000.0)])
    center = np.array([0.55, 0.4, 0.3, 0.5])
    bowl = float(np.sum(((u - center) / np.array([0.35, 0.3, 0.5, 0.25])) ** 2))
    base = -0.09 + 0.17 * (1.0 - math.exp(-0.5 * bowl))
    jitter = np.random.default_rng(seed).normal(0.0, noise)
    return float(np.clip(base + jitter, -0.1, 0.1))
