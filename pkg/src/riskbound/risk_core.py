"""Scenario-program primitives, sample-complexity arithmetic and empirical risk oracles.

The bounding machinery rests on one scenario program: the smallest scalar
that dominates every sample.  Its solution upper-bounds VaR_eps with
confidence ``1 - (1 - eps)**N``; everything else in the package is built
on that fact plus an essential upper bound ``ell`` on the variable.

The ``empirical_*`` functions evaluate VaR, CVaR and EVaR of the empirical
distribution of a sample set.  They are brute-force oracles used to check
the bounds, not estimators with guarantees.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import stats

from .errors import InvalidInput

__all__ = [
    "SampleSet",
    "ConfidenceSpec",
    "EssentialBound",
    "as_array",
    "scenario_max",
    "var_bound_confidence",
    "min_samples",
    "scenario_confidence_general",
    "expectation_bound",
    "empirical_var",
    "empirical_cvar",
    "empirical_evar",
    "golden_section",
    "load_samples",
]


@dataclass(frozen=True)
class SampleSet:
    """Ordered multiset of finite scalar draws (N >= 1)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).reshape(-1)
        if arr.size == 0:
            raise InvalidInput("sample set must contain at least one value")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise InvalidInput(f"sample {bad} is not finite ({arr[bad]!r})")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self):
        return iter(self.values.tolist())

    def negated(self) -> "SampleSet":
        return SampleSet(-self.values)


SampleLike = Union[SampleSet, Sequence[float], np.ndarray]


def as_array(samples: SampleLike) -> np.ndarray:
    """Validate ``samples`` and return them as a read-only float array."""
    if isinstance(samples, SampleSet):
        return samples.values
    return SampleSet(np.asarray(samples, dtype=float)).values


@dataclass(frozen=True)
class ConfidenceSpec:
    """Miss mass ``epsilon`` in (0, 1) and confidence ``gamma`` in [0, 1)."""

    epsilon: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidInput(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidInput(f"gamma must lie in [0, 1), got {self.gamma}")


@dataclass(frozen=True)
class EssentialBound:
    """A value ``ell`` the random variable never exceeds."""

    ell: float

    def __post_init__(self):
        if not math.isfinite(self.ell):
            raise InvalidInput(f"essential bound must be finite, got {self.ell}")

    def check(self, samples: SampleLike) -> np.ndarray:
        """Return the samples as an array, raising if any exceeds ``ell``."""
        arr = as_array(samples)
        above = np.flatnonzero(arr > self.ell)
        if above.size:
            k = int(above[0])
            raise InvalidInput(
                f"essential bound violated by sample {k}: {float(arr[k])!r} > ell={self.ell!r}"
            )
        return arr


def _as_ell(ell: Union[EssentialBound, float]) -> float:
    return ell.ell if isinstance(ell, EssentialBound) else EssentialBound(float(ell)).ell


def _check_unit(name: str, value: float, *, open_low: bool = False) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0) or (open_low and value == 0.0):
        interval = "(0, 1]" if open_low else "[0, 1]"
        raise InvalidInput(f"{name} must lie in {interval}, got {value}")
    return value


def scenario_max(samples: SampleLike) -> float:
    """Solve the scalar scenario program: the least zeta with zeta >= every sample."""
    return float(np.max(as_array(samples)))


def var_bound_confidence(n: int, epsilon: float) -> float:
    """Confidence ``1 - (1 - eps)**n`` that the scenario max dominates VaR_eps."""
    if int(n) != n or n < 1:
        raise InvalidInput(f"sample count must be a positive integer, got {n}")
    epsilon = _check_unit("epsilon", epsilon)
    if epsilon == 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-epsilon))


def min_samples(spec: ConfidenceSpec) -> int:
    """Smallest N >= 1 with ``var_bound_confidence(N, eps) >= gamma``."""
    if spec.gamma == 0.0:
        return 1
    n = max(1, math.ceil(math.log1p(-spec.gamma) / math.log1p(-spec.epsilon)))
    # the closed form can be off by one at representable boundaries
    while n > 1 and var_bound_confidence(n - 1, spec.epsilon) >= spec.gamma:
        n -= 1
    while var_bound_confidence(n, spec.epsilon) < spec.gamma:
        n += 1
    return n


def scenario_confidence_general(n: int, d: int, epsilon: float) -> float:
    """Binomial tail bounding P[V(z*_N) > eps] for a d-dimensional scenario program."""
    if int(n) != n or n < 1 or int(d) != d or d < 1:
        raise InvalidInput("n and d must be positive integers")
    if d > n:
        raise InvalidInput(f"decision dimension d={d} exceeds sample count N={n}")
    epsilon = _check_unit("epsilon", epsilon)
    return float(min(1.0, stats.binom.cdf(d - 1, n, epsilon)))


def expectation_bound(zeta: float, ell: Union[EssentialBound, float], epsilon: float) -> float:
    """Upper bound ``zeta (1 - eps) + ell eps`` on the mean of a variable bounded by ``ell``."""
    ell_v = _as_ell(ell)
    epsilon = _check_unit("epsilon", epsilon)
    if zeta > ell_v:
        raise InvalidInput(f"zeta={zeta!r} exceeds the essential bound ell={ell_v!r}")
    return zeta * (1.0 - epsilon) + ell_v * epsilon


def empirical_var(samples: SampleLike, epsilon: float) -> float:
    """Smallest sample value zeta with ``#{x <= zeta} / N >= 1 - eps``."""
    epsilon = _check_unit("epsilon", epsilon)
    x = np.sort(as_array(samples))
    n = x.size
    counts = np.searchsorted(x, x, side="right")
    ok = counts >= (1.0 - epsilon) * n - 1e-9
    return float(x[np.argmax(ok)])


def empirical_cvar(samples: SampleLike, alpha: float) -> float:
    """Rockafellar-Uryasev CVaR_alpha of the empirical distribution.

    The objective ``z + mean(max(x - z, 0)) / alpha`` is piecewise linear and
    convex with kinks at the samples, so scanning the sorted samples is exact.
    """
    alpha = _check_unit("alpha", alpha, open_low=True)
    x = np.sort(as_array(samples))
    n = x.size
    # tail[k] = sum of x[j] for j > k
    tail = np.concatenate([np.cumsum(x[::-1])[::-1][1:], [0.0]])
    above = n - 1 - np.arange(n)
    objective = x + (tail - x * above) / (n * alpha)
    return float(objective.min())


def golden_section(f, lo: float, hi: float, tol: float = 1e-8, max_iter: int = 200):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` to bracket width ``tol``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def empirical_evar(
    samples: SampleLike,
    alpha: float,
    z_range: tuple = (1e-4, 1e4),
    n_grid: int = 200,
    rtol: float = 1e-8,
) -> float:
    """EVaR_alpha of the empirical distribution: inf over z > 0 of ln(mean(e^{zX}) / alpha) / z.

    A log-spaced scan over ``z_range`` is refined by golden-section search
    (in log z) around the best grid point.  The z -> inf limit (the sample
    max) and, for alpha = 1, the z -> 0 limit (the mean) are also candidates,
    since the infimum may only be approached at the ends.
    """
    alpha = _check_unit("alpha", alpha, open_low=True)
    x = as_array(samples)
    x_max = float(x.max())
    shifted = x - x_max
    log_alpha = math.log(alpha)

    def value(log_z: float) -> float:
        z = math.exp(log_z)
        m = float(np.mean(np.exp(z * shifted)))
        return x_max + (math.log(m) - log_alpha) / z

    grid = np.linspace(math.log(z_range[0]), math.log(z_range[1]), n_grid)
    vals = np.array([value(g) for g in grid])
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, n_grid - 1)]
    # bracket width in log z is a relative tolerance on z
    _, refined = golden_section(value, lo, hi, tol=rtol)
    candidates = [float(vals[k]), refined, x_max]
    if alpha == 1.0:
        candidates.append(float(np.mean(x)))
    return min(candidates)


def load_samples(path: Union[str, Path]) -> SampleSet:
    """Read a sample set from a JSON array or a one-value-per-line CSV (header optional)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        data = json.loads(text)
        if not isinstance(data, list):
            raise InvalidInput(f"{path}: expected a JSON array of numbers")
        return SampleSet(np.asarray(data, dtype=float))
    return SampleSet(np.asarray(_parse_csv_column(text), dtype=float))


def _parse_csv_column(text: str) -> list:
    values = []
    for i, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or not row[0].strip():
            continue
        try:
            values.append(float(row[0]))
        except ValueError:
            if i == 0 and not values:
                continue  # header
            raise InvalidInput(f"line {i + 1}: cannot parse {row[0]!r} as a number") from None
    return values


def dump_samples_csv(values: Iterable[float], path: Union[str, Path], header: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([header])
        for v in values:
            w.writerow([repr(float(v))])
