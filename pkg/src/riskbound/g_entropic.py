"""Sample-based upper bounds on g-entropic risk measures (CVaR, EVaR, user conjugates).

A g-entropic measure admits the representation

    ER(X) = inf_{mu, t > 0} E[L(X, mu, t)],   L(x, mu, t) = t (mu + g*(x/t - mu + beta)).

Replacing the expectation by the scenario bound
``zeta_N(mu, t) (1 - eps) + L(ell, mu, t) eps`` and minimizing over
``(mu, t)`` gives a bound that holds with confidence ``1 - (1 - eps)**N``.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import InvalidInput, SearchError
from .risk_core import EssentialBound, SampleLike, _as_ell, _check_unit, as_array, var_bound_confidence

log = logging.getLogger(__name__)

DEFAULT_EXP_CAP = 700.0
# half-width, in log t, of the final 1-D polish around the simplex optimum
POLISH_SPAN = 12.0
_EXP_OVERFLOW = 709.0


@dataclass(frozen=True)
class SearchConfig:
    """Outer search over (mu, t): a coarse grid then Nelder-Mead polishing in (mu, log t)."""

    t_min: float = 1e-3
    t_max: float = 1e3
    n_t: int = 25
    n_mu: int = 25
    n_starts: int = 3
    tol: float = 1e-8
    max_evals: int = 2000
    exp_cap: float = DEFAULT_EXP_CAP

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max) or self.n_t < 2 or self.n_mu < 2 or self.n_starts < 1:
            raise SearchError(f"empty or degenerate search box: {self}")

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInput(f"unknown search config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "SearchConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossSpec:
    """A g-entropic loss: convex conjugate ``g*`` and divergence level ``beta``.

    ``loss`` may supply an algebraically equivalent, numerically safer form of
    ``t (mu + g*(x/t - mu + beta))``; it must accept numpy arrays.  Losses are
    nondecreasing in ``x`` (conjugates of functions on [0, inf) are), which
    lets the scenario max be taken on the largest sample only.
    """

    conjugate: Callable
    beta: float = 0.0
    label: str = "custom"
    loss: Optional[Callable] = field(default=None, compare=False)
    # same loss as a float-only function of (x, z = t*mu, t, exp_cap)
    scalar: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.beta >= 0:
            raise InvalidInput(f"beta must be nonnegative, got {self.beta}")

    def evaluate(self, x, mu, t, exp_cap: float = DEFAULT_EXP_CAP):
        """Vectorized L(x, mu, t); non-finite values come back as +inf."""
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.loss is not None:
                out = self.loss(x, mu, t, exp_cap)
            else:
                out = t * (mu + self.conjugate(x / t - mu + self.beta))
        out = np.asarray(out, dtype=float)
        return np.where(np.isfinite(out), out, np.inf)


@dataclass(frozen=True)
class BoundResult:
    bound: float
    arg_mu: float
    arg_t: float
    evaluations: int
    confidence: float
    n: int
    epsilon: float
    label: str
    zeta: float
    at_box_edge: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _check_loss_args(t, alpha):
    if not t > 0:
        raise InvalidInput(f"t must be positive, got {t}")
    _check_unit("alpha", alpha, open_low=True)


def loss_cvar(x: float, mu: float, t: float, alpha: float) -> float:
    """CVaR loss ``t mu + max(x - t mu, 0) / alpha``."""
    _check_loss_args(t, alpha)
    z = t * mu
    return z + max(x - z, 0.0) / alpha


def loss_evar(x: float, mu: float, t: float, alpha: float, exp_cap: float = DEFAULT_EXP_CAP) -> float:
    """EVaR loss ``t mu + t exp(x/t - mu - ln(alpha) - 1)``; +inf once the exponent passes ``exp_cap``."""
    _check_loss_args(t, alpha)
    expo = x / t - mu - math.log(alpha) - 1.0
    if expo > min(exp_cap, _EXP_OVERFLOW):
        return math.inf
    return t * mu + t * math.exp(expo)


def _cvar_loss_array(alpha):
    def loss(x, mu, t, exp_cap):
        z = t * mu
        return z + np.maximum(x - z, 0.0) / alpha

    return loss


def _evar_loss_array(alpha):
    log_alpha = math.log(alpha)

    def loss(x, mu, t, exp_cap):
        expo = x / t - mu - log_alpha - 1.0
        safe = np.minimum(expo, exp_cap)
        return np.where(expo > exp_cap, np.inf, t * mu + t * np.exp(safe))

    return loss


def _cvar_scalar(alpha):
    def loss(x, z, t, exp_cap):
        return z + max(x - z, 0.0) / alpha

    return loss


def _evar_scalar(alpha):
    log_alpha = math.log(alpha)

    def loss(x, z, t, exp_cap):
        expo = (x - z) / t - log_alpha - 1.0
        if expo > min(exp_cap, _EXP_OVERFLOW):
            return math.inf
        return z + t * math.exp(expo)

    return loss


def cvar_spec(alpha: float) -> LossSpec:
    """CVaR_alpha as a g-entropic measure: g*(y) = max(y, 0) / alpha, beta = 0."""
    alpha = _check_unit("alpha", alpha, open_low=True)
    return LossSpec(
        conjugate=lambda y: np.maximum(y, 0.0) / alpha,
        beta=0.0,
        label=f"cvar[{alpha:g}]",
        loss=_cvar_loss_array(alpha),
        scalar=_cvar_scalar(alpha),
    )


def evar_spec(alpha: float) -> LossSpec:
    """EVaR_alpha as a g-entropic measure: g*(y) = exp(y - 1), beta = -ln(alpha)."""
    alpha = _check_unit("alpha", alpha, open_low=True)
    return LossSpec(
        conjugate=lambda y: np.exp(y - 1.0),
        beta=-math.log(alpha),
        label=f"evar[{alpha:g}]",
        loss=_evar_loss_array(alpha),
        scalar=_evar_scalar(alpha),
    )


def bound_g_entropic(
    samples: SampleLike,
    ell,
    spec: LossSpec,
    epsilon: float,
    search: Optional[SearchConfig] = None,
) -> BoundResult:
    """Minimize ``(1 - eps) max_k L(x_k, mu, t) + eps L(ell, mu, t)`` over (mu, t > 0).

    The search runs in ``(z, s) = (t mu, log t)``: ``z`` carries the units of
    the samples and stays bounded where ``mu`` alone would diverge as t -> 0.
    """
    search = search or SearchConfig()
    ell_v = _as_ell(ell)
    x = EssentialBound(ell_v).check(samples)
    epsilon = _check_unit("epsilon", epsilon)
    x_top = float(x.max())
    x_low = float(x.min())
    span = ell_v - x_low
    if span <= 0.0:
        span = max(1.0, abs(ell_v))
    cap = search.exp_cap
    scalar = spec.scalar

    def objective_grid(z, t):
        mu = z / t
        # zero-weight terms are dropped so 0 * inf never poisons the sum
        j = 0.0
        if epsilon < 1.0:
            j = j + (1.0 - epsilon) * spec.evaluate(x_top, mu, t, cap)
        if epsilon > 0.0:
            j = j + epsilon * spec.evaluate(ell_v, mu, t, cap)
        return np.where(np.isnan(j), np.inf, j)

    n_evals = 0

    def objective(p):
        nonlocal n_evals
        n_evals += 1
        t = math.exp(p[1])
        if scalar is not None:
            j = 0.0
            if epsilon < 1.0:
                j += (1.0 - epsilon) * scalar(x_top, p[0], t, cap)
            if epsilon > 0.0:
                j += epsilon * scalar(ell_v, p[0], t, cap)
        else:
            j = float(objective_grid(p[0], t))
        return j if math.isfinite(j) else math.inf

    ts = np.geomspace(search.t_min, search.t_max, search.n_t)
    zs = np.linspace(x_low - span, ell_v + span, search.n_mu)
    Z, T = np.meshgrid(zs, ts, indexing="ij")
    grid = objective_grid(Z, T)
    n_evals += grid.size
    order = np.argsort(grid, axis=None, kind="stable")
    starts = [np.unravel_index(k, grid.shape) for k in order[: search.n_starts] if np.isfinite(grid.flat[k])]
    if not starts:
        raise SearchError("objective is infinite on the whole search grid")

    d_z = zs[1] - zs[0]
    d_s = math.log(ts[1] / ts[0])
    budget = search.max_evals
    best_val, best_p = float(grid.flat[order[0]]), None
    i0, j0 = np.unravel_index(order[0], grid.shape)
    best_p = np.array([zs[i0], math.log(ts[j0])])
    for i, j in starts:
        p0 = np.array([zs[i], math.log(ts[j])])
        step = np.array([d_z, d_s])
        for _ in range(2):  # restart once from the converged point
            simplex = np.array([p0, p0 + [step[0], 0.0], p0 + [0.0, step[1]]])
            res = minimize(
                objective,
                p0,
                method="Nelder-Mead",
                options={"initial_simplex": simplex, "xatol": search.tol, "fatol": search.tol, "maxfev": budget},
            )
            p0 = res.x
            step = step * 0.05
            if res.fun < best_val:
                best_val, best_p = float(res.fun), res.x.copy()

    # J is jointly convex in (z, t) (each loss term is a perspective of a
    # convex function), so min_z J is unimodal in s; a nested 1-D polish
    # reaches optima the simplex stalls short of, e.g. t -> 0 when eps = 0
    def profile(s):
        z0 = best_p[0]
        step = max(math.exp(s), 1e-12)
        try:
            with warnings.catch_warnings():
                # Brent's parabolic steps see inf at rejected points
                warnings.simplefilter("ignore", RuntimeWarning)
                r = minimize_scalar(lambda z: objective((z, s)), bracket=(z0, z0 + step), method="brent", tol=1e-12)
        except (RuntimeError, ValueError):
            return math.inf, z0
        return float(r.fun), float(r.x)

    s0 = float(best_p[1])
    r = minimize_scalar(
        lambda s: profile(s)[0],
        bounds=(s0 - POLISH_SPAN, s0 + POLISH_SPAN),
        method="bounded",
        options={"xatol": 1e-10},
    )
    val, z_at = profile(float(r.x))
    if val < best_val:
        best_val, best_p = val, np.array([z_at, float(r.x)])

    arg_t = float(math.exp(best_p[1]))
    arg_mu = float(best_p[0] / arg_t)
    edge = not (ts[0] < arg_t < ts[-1])
    if edge:
        log.debug("%s bound optimum at t=%g lies on or outside the search box", spec.label, arg_t)
    zeta = float(spec.evaluate(x_top, arg_mu, arg_t, cap))
    return BoundResult(
        bound=best_val,
        arg_mu=arg_mu,
        arg_t=arg_t,
        evaluations=n_evals,
        confidence=var_bound_confidence(x.size, epsilon),
        n=int(x.size),
        epsilon=epsilon,
        label=spec.label,
        zeta=zeta,
        at_box_edge=edge,
    )


def bound_cvar(samples: SampleLike, ell, alpha: float, epsilon: float, search: Optional[SearchConfig] = None) -> BoundResult:
    """High-confidence upper bound on CVaR_alpha of the sampled variable."""
    return bound_g_entropic(samples, ell, cvar_spec(alpha), epsilon, search)


def bound_evar(samples: SampleLike, ell, alpha: float, epsilon: float, search: Optional[SearchConfig] = None) -> BoundResult:
    """High-confidence upper bound on EVaR_alpha of the sampled variable."""
    return bound_g_entropic(samples, ell, evar_spec(alpha), epsilon, search)
