"""Risk-aware verification of the multi-robot system and percentile-optimal controller synthesis."""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from .decision_select import DecisionDomain, SelectionReport, good_decision
from .errors import InvalidInput
from .g_entropic import BoundResult, SearchConfig, bound_cvar, bound_evar
from .risk_core import ConfidenceSpec, SampleSet, min_samples
from .seeding import derive_rng, derive_seed
from . import sim_multiagent as sim

# -R is bounded above by the magnitude of the robustness floor
NEG_ROBUSTNESS_BOUND = -sim.ROBUSTNESS_FLOOR


@dataclass(frozen=True)
class RobustnessSample:
    value: float
    draw: sim.ScenarioDraw
    params: sim.ControllerParams

    def __post_init__(self):
        if -self.value > NEG_ROBUSTNESS_BOUND + 1e-12:
            raise InvalidInput(f"robustness {self.value} is below the floor {sim.ROBUSTNESS_FLOOR}")


@dataclass(frozen=True)
class RiskMapQuery:
    params: sim.ControllerParams
    gamma1: float = 0.95
    alpha: float = 0.1
    n_inner: Optional[int] = None
    epsilon_inner: float = 0.02

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInput(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.epsilon_inner < 1.0:
            raise InvalidInput(f"epsilon_inner must lie in [0, 1), got {self.epsilon_inner}")
        if not 0.0 <= self.gamma1 < 1.0:
            raise InvalidInput(f"gamma1 must lie in [0, 1), got {self.gamma1}")
        need = self.required_samples()
        if self.n_inner is None:
            object.__setattr__(self, "n_inner", need)
        elif self.n_inner < need:
            raise InvalidInput(f"n_inner={self.n_inner} is below the {need} samples needed for gamma1={self.gamma1}")

    def required_samples(self) -> int:
        if self.epsilon_inner == 0.0:
            return 1
        return min_samples(ConfidenceSpec(self.epsilon_inner, self.gamma1))

    def with_params(self, params) -> "RiskMapQuery":
        return RiskMapQuery(sim.ControllerParams.from_any(params), self.gamma1, self.alpha, self.n_inner, self.epsilon_inner)


@dataclass(frozen=True)
class VerificationReport:
    bound_cvar: float
    bound_evar: float
    n_used: int
    epsilon: float
    gamma: float
    alpha: float
    seed: int
    confidence: float
    samples: tuple = field(default=(), repr=False)
    cvar_detail: Optional[BoundResult] = field(default=None, repr=False)
    evar_detail: Optional[BoundResult] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "bound_cvar": self.bound_cvar,
            "bound_evar": self.bound_evar,
            "n_used": self.n_used,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "seed": self.seed,
            "confidence": self.confidence,
            "certified_worst_case_robustness": expected_shortfall_interpretation(self.bound_cvar),
        }


@dataclass(frozen=True)
class SimSettings:
    noise_model: str = "gaussian"
    dt: float = sim.DT
    horizon: float = sim.HORIZON


def _one_robustness(params: sim.ControllerParams, master_seed: int, settings: SimSettings, k: int) -> float:
    try:
        draw = sim.sample_scenario(derive_rng(master_seed, k))
        traj = sim.rollout(draw, params, settings.dt, settings.horizon, settings.noise_model)
        return sim.robustness(traj, settings.horizon)
    except Exception as exc:
        raise type(exc)(f"draw {k}: {exc}") from exc


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def collect_robustness(
    params,
    n: int,
    master_seed: int,
    settings: SimSettings = SimSettings(),
    workers: int = 1,
) -> SampleSet:
    """Robustness of ``n`` independent uniformly drawn scenarios; draw k uses stream ``(master_seed, k)``."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    params = sim.ControllerParams.from_any(params)
    job = partial(_one_robustness, params, int(master_seed), settings)
    return SampleSet(np.array(_map(job, range(n), workers)))


def bounds_from_robustness(
    values,
    alpha: float,
    epsilon: float,
    search: Optional[SearchConfig] = None,
    evar: bool = True,
):
    """CVaR (and optionally EVaR) bounds on the negated robustness samples."""
    neg = SampleSet(-np.asarray(values, dtype=float))
    c = bound_cvar(neg, NEG_ROBUSTNESS_BOUND, alpha, epsilon, search)
    e = bound_evar(neg, NEG_ROBUSTNESS_BOUND, alpha, epsilon, search) if evar else None
    return c, e


def verify(
    params,
    alpha: float,
    epsilon: float,
    gamma: float,
    master_seed: int,
    settings: SimSettings = SimSettings(),
    workers: int = 1,
    sampler: Optional[Callable[[int, int], np.ndarray]] = None,
    search: Optional[SearchConfig] = None,
) -> VerificationReport:
    """Certify upper bounds on CVaR_alpha and EVaR_alpha of the negated robustness.

    ``sampler(n, seed)`` may replace the simulator with any source of
    robustness values in ``[-0.1, inf)``.
    """
    spec = ConfidenceSpec(epsilon, gamma)
    if not 0.0 < alpha <= 1.0:
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha}")
    if epsilon >= 1.0 - gamma:
        warnings.warn(f"epsilon={epsilon} >= 1 - gamma; the bound is likely loose", stacklevel=2)
    n = min_samples(spec)
    if sampler is None:
        values = collect_robustness(params, n, master_seed, settings, workers).values
    else:
        values = np.asarray(sampler(n, master_seed), dtype=float)
    c, e = bounds_from_robustness(values, alpha, epsilon, search)
    return VerificationReport(
        bound_cvar=c.bound,
        bound_evar=e.bound,
        n_used=n,
        epsilon=epsilon,
        gamma=gamma,
        alpha=alpha,
        seed=int(master_seed),
        confidence=c.confidence,
        samples=tuple(values.tolist()),
        cvar_detail=c,
        evar_detail=e,
    )


def riskmap(
    query: RiskMapQuery,
    master_seed: int,
    settings: SimSettings = SimSettings(),
    workers: int = 1,
    epsilon_inner: Optional[float] = None,
) -> float:
    """CVaR verification bound for the controller in ``query``; deterministic in ``master_seed``."""
    eps = query.epsilon_inner if epsilon_inner is None else epsilon_inner
    values = collect_robustness(query.params, query.n_inner, master_seed, settings, workers).values
    c, _ = bounds_from_robustness(values, query.alpha, eps, evar=False)
    return c.bound


@dataclass(frozen=True)
class Candidate:
    params: sim.ControllerParams
    inner_seed: int

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "inner_seed": self.inner_seed}


def _sample_candidate(bounds, master_seed: int, crn: bool, rng: np.random.Generator) -> Candidate:
    params = sim.sample_params(rng, bounds)
    # common random numbers: every candidate sees the same scenario batch
    inner = derive_seed(master_seed, 1) if crn else int(rng.integers(0, 2**63 - 1))
    return Candidate(params, inner)


def _simulated_reward(template: RiskMapQuery, settings: SimSettings, cand: Candidate) -> float:
    return -riskmap(template.with_params(cand.params), cand.inner_seed, settings)


def _surrogate_reward(fn: Callable, cand: Candidate) -> float:
    return -float(fn(cand.params, cand.inner_seed))


@dataclass(frozen=True)
class SynthesisResult:
    selection: SelectionReport
    candidates: int
    riskmap_value: float
    params: sim.ControllerParams
    riskmap_values: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "riskmap": self.riskmap_value,
            "certified_worst_case_robustness": expected_shortfall_interpretation(self.riskmap_value),
            "candidates": self.candidates,
            "best_index": self.selection.best_index,
            "inner_seed": self.selection.best_decision.inner_seed,
            "epsilon2": self.selection.epsilon,
            "gamma2": self.selection.gamma,
        }


def synthesis_domain(
    template: RiskMapQuery,
    master_seed: int,
    settings: SimSettings = SimSettings(),
    bounds=sim.PARAM_BOUNDS,
    crn: bool = False,
    riskmap_fn: Optional[Callable] = None,
) -> DecisionDomain:
    """Controller parameters drawn uniformly from ``bounds``, rewarded by ``-riskmap``.

    ``riskmap_fn(params, seed)`` (picklable) substitutes a cheap surrogate for
    the simulated riskmap.
    """
    sampler = partial(_sample_candidate, tuple(tuple(b) for b in bounds), int(master_seed), crn)
    if riskmap_fn is None:
        reward = partial(_simulated_reward, template, settings)
    else:
        reward = partial(_surrogate_reward, riskmap_fn)
    return DecisionDomain(sampler=sampler, reward=reward, descriptor="controller-parameters")


def synthesize(
    gamma2: float,
    epsilon2: float,
    template: RiskMapQuery,
    master_seed: int,
    settings: SimSettings = SimSettings(),
    bounds=sim.PARAM_BOUNDS,
    n_candidates: Optional[int] = None,
    crn: bool = False,
    riskmap_fn: Optional[Callable] = None,
    workers: int = 1,
) -> SynthesisResult:
    """Best of ``min_samples(gamma2, epsilon2)`` uniformly drawn controllers by riskmap.

    Candidate k draws its parameters and inner seed from stream ``(derive_seed(master_seed, 0), k)``.
    """
    spec = ConfidenceSpec(epsilon2, gamma2)
    domain = synthesis_domain(template, master_seed, settings, bounds, crn, riskmap_fn)
    sel = good_decision(domain, spec, derive_seed(master_seed, 0), n=n_candidates, workers=workers)
    best = sel.best_decision
    return SynthesisResult(
        selection=sel,
        candidates=sel.samples_used,
        riskmap_value=-sel.best_reward,
        params=best.params,
        riskmap_values=tuple(-r for r in sel.rewards),
    )


def expected_shortfall_interpretation(bound: float) -> float:
    """Certified lower bound on the mean robustness over the worst alpha-fraction of scenarios."""
    return -bound


def histogram(values: Sequence[float], bins: int = 30, value_range=None):
    """``(bin_centers, counts)`` for CSV export."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=value_range)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers.tolist(), counts.tolist()
