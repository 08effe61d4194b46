"""Percentile-guaranteed decision selection by uniform sampling.

Draw N = min_samples(gamma, eps) decisions uniformly, keep the best.  With
probability at least gamma, the fraction of the decision space that strictly
beats the kept decision is at most eps.  Travelling-salesman tours are the
demonstration domain.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInput
from .risk_core import ConfidenceSpec, min_samples
from .seeding import derive_rng

__all__ = [
    "DecisionDomain",
    "SelectionReport",
    "TspInstance",
    "good_decision",
    "tsp_cost",
    "tsp_domain",
    "uniform_permutation",
    "violation_volume_estimate",
    "exact_violation_fraction",
    "random_instance",
]


@dataclass(frozen=True)
class DecisionDomain:
    """A decision space with a uniform sampler and a reward to maximize.

    ``sampler`` receives a ``numpy.random.Generator`` and returns one uniform
    draw.  Both callables must be picklable (module-level functions or
    ``functools.partial`` of them) to be evaluated in worker processes.
    The reward is assumed to attain its maximum on the domain; that is the
    caller's obligation and is not checked.
    """

    sampler: Callable[[np.random.Generator], Any]
    reward: Callable[[Any], float]
    descriptor: str = "domain"


@dataclass(frozen=True)
class SelectionReport:
    best_decision: Any
    best_reward: float
    samples_used: int
    epsilon: float
    gamma: float
    best_index: int = 0
    seed: Optional[int] = None
    rewards: tuple = field(default=(), repr=False)
    decisions: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        decision = self.best_decision
        if hasattr(decision, "to_dict"):
            decision = decision.to_dict()
        elif isinstance(decision, np.ndarray):
            decision = decision.tolist()
        return {
            "best_decision": decision,
            "best_reward": self.best_reward,
            "best_index": self.best_index,
            "samples_used": self.samples_used,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "seed": self.seed,
        }


def _draw_and_score(domain: DecisionDomain, seed: int, k: int):
    decision = domain.sampler(derive_rng(seed, k))
    reward = float(domain.reward(decision))
    if not math.isfinite(reward):
        raise InvalidInput(f"reward of sample {k} is not finite: {reward!r}")
    return decision, reward


def evaluate_samples(domain: DecisionDomain, seed: int, n: int, workers: int = 1, offset: int = 0) -> list:
    """Draw and score samples ``offset .. offset+n-1``; order is by index, not completion."""
    job = partial(_draw_and_score, domain, seed)
    indices = range(offset, offset + n)
    if workers <= 1 or n <= 1:
        return [job(k) for k in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, indices, chunksize=max(1, n // (4 * workers))))


def good_decision(
    domain: DecisionDomain,
    spec: ConfidenceSpec,
    seed: int,
    n: Optional[int] = None,
    workers: int = 1,
) -> SelectionReport:
    """Return the best of ``min_samples(spec)`` uniform draws (or ``n`` if given).

    Ties go to the earliest draw.  Sample k uses the stream ``(seed, k)``.
    """
    n = min_samples(spec) if n is None else int(n)
    if n < 1:
        raise InvalidInput("at least one decision must be sampled")
    scored = evaluate_samples(domain, seed, n, workers)
    rewards = [r for _, r in scored]
    best = max(range(n), key=lambda k: (rewards[k], -k))
    return SelectionReport(
        best_decision=scored[best][0],
        best_reward=rewards[best],
        samples_used=n,
        epsilon=spec.epsilon,
        gamma=spec.gamma,
        best_index=best,
        seed=seed,
        rewards=tuple(rewards),
        decisions=tuple(d for d, _ in scored),
    )


def violation_volume_estimate(domain: DecisionDomain, decision, trials: int, seed: int, workers: int = 1):
    """Monte-Carlo estimate of the volume fraction strictly better than ``decision``.

    Returns ``(estimate, standard_error)``; ties count as not better.
    """
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    target = float(domain.reward(decision))
    scored = evaluate_samples(domain, seed, trials, workers)
    better = sum(1 for _, r in scored if r > target)
    p = better / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


# --- travelling salesman -------------------------------------------------------

_MATRIX_LIMIT = 12


@dataclass(frozen=True)
class TspInstance:
    """Planar nodes; tours are closed and use Euclidean edge lengths."""

    nodes: np.ndarray
    _dist: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.nodes, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise InvalidInput("a TSP instance needs at least 3 two-dimensional nodes")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("node coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "nodes", pts)
        if pts.shape[0] <= _MATRIX_LIMIT:
            n = pts.shape[0]
            d = np.zeros((n, n))
            for i in range(n):
                for j in range(i + 1, n):
                    d[i, j] = d[j, i] = math.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
            object.__setattr__(self, "_dist", d)

    @property
    def count(self) -> int:
        return int(self.nodes.shape[0])

    def distance(self, i: int, j: int) -> float:
        if self._dist is not None:
            return float(self._dist[i, j])
        a, b = self.nodes[i], self.nodes[j]
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def to_dict(self) -> dict:
        return {"nodes": self.nodes.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TspInstance":
        if set(data) != {"nodes"}:
            raise InvalidInput('TSP instance JSON must be {"nodes": [[x, y], ...]}')
        return cls(np.asarray(data["nodes"], dtype=float))

    @classmethod
    def load(cls, path) -> "TspInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def random_instance(n: int, rng: np.random.Generator, half_width: float = 5.0) -> TspInstance:
    """``n`` nodes uniform on ``[-half_width, half_width]^2``."""
    return TspInstance(rng.uniform(-half_width, half_width, size=(n, 2)))


def uniform_permutation(n: int, seed) -> list:
    """Uniform random permutation of ``0..n-1``; ``seed`` is an int or a Generator."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.permutation(n).tolist()


def _canonical(tour: Sequence[int]) -> list:
    # rotate to start at node 0 and fix the direction, so equivalent tours
    # sum their edges in the same order and get bit-identical costs
    k = tour.index(0)
    t = list(tour[k:]) + list(tour[:k])
    if len(t) > 2 and t[1] > t[-1]:
        t = [t[0]] + t[:0:-1]
    return t


def tsp_cost(instance: TspInstance, tour: Sequence[int]) -> float:
    """Closed-loop tour length."""
    tour = [int(v) for v in tour]
    if sorted(tour) != list(range(instance.count)):
        raise InvalidInput(f"tour is not a permutation of 0..{instance.count - 1}: {tour}")
    t = _canonical(tour)
    total = 0.0
    for a, b in zip(t, t[1:] + t[:1]):
        total += instance.distance(a, b)
    return total


def _sample_tour(n: int, rng: np.random.Generator) -> list:
    return uniform_permutation(n, rng)


def _negative_cost(instance: TspInstance, tour) -> float:
    return -tsp_cost(instance, tour)


def tsp_domain(instance: TspInstance) -> DecisionDomain:
    """All tours of ``instance``, rewarded by negative length."""
    return DecisionDomain(
        sampler=partial(_sample_tour, instance.count),
        reward=partial(_negative_cost, instance),
        descriptor=f"tsp[{instance.count}]",
    )


def exact_violation_fraction(instance: TspInstance, tour: Sequence[int]) -> float:
    """Exact fraction of all tours strictly shorter than ``tour``.

    Every undirected cycle corresponds to the same number of permutations
    (2n), so counting cycles with node 0 first and ``t[1] < t[-1]`` suffices.
    """
    n = instance.count
    target = tsp_cost(instance, tour)
    better = total = 0
    for rest in itertools.permutations(range(1, n)):
        if rest[0] > rest[-1]:
            continue
        total += 1
        if tsp_cost(instance, (0,) + rest) < target:
            better += 1
    return better / total
