"""Three-robot unicycle simulator with a go-to-goal controller and a barrier safety filter.

Arena, margins and robustness follow the cooperative go-to-goal task:
robots must stay 0.15 m apart for 30 s while reaching within 0.1 m of their
goals.  The controller is parameterized by ``ControllerParams``:

* nominal command, with ``d`` the goal distance and ``e`` the bearing error
  wrapped to (-pi, pi]::

      v = p1 * d * cos(e)                 clipped to [0, V_MAX]
      w = p2 * e + p3 * sin(e) * cos(e)    clipped to [-W_MAX, W_MAX]

  ``p1`` sets approach speed, ``p2`` turns toward the goal and ``p3`` adds a
  correction whose sign flips once the goal is behind the robot.
* safety filter, per pair with ``h = |p_i - p_j|^2 - 0.15^2``: commanded
  speeds are scaled down until ``dh/dt >= -k h`` holds for every pair,
  with ``k = min(p4, 1/dt)`` so the Euler step cannot jump the boundary.
  The filter guards a radius ``BARRIER_BUFFER`` wider than the safety
  distance so that position noise rarely reaches the real margin.
* orbit rule: a robot whose nearest neighbour sits between it and its goal
  (or inside the guard radius) circles that neighbour counter-clockwise,
  turning outward as it penetrates the guard.  Without it symmetric
  encounters stall the filter into a deadlock.

Kinematics are integrated with explicit Euler; position noise is added after
each step and positions are clamped to the arena.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInput, SearchError

ARENA_X = (-1.0, 1.0)
ARENA_Y = (-0.6, 0.6)
SAFETY_DISTANCE = 0.15
GOAL_RADIUS = 0.1
ROBUSTNESS_FLOOR = -0.1
SEPARATION_MARGIN = 0.3
V_MAX = 0.2
W_MAX = 3.6
DT = 0.033
HORIZON = 30.0
NOISE_SIGMA = 0.002
NOISE_MODELS = ("none", "gaussian", "uniform")
PARAM_BOUNDS = ((0.2, 5.0), (0.2, 5.0), (0.2, 5.0), (0.1, 200.0))
N_AGENTS = 3
REJECTION_CAP = 100_000
FILTER_ITERATIONS = 10
# a robot whose goal lies behind a nearby neighbour circles that neighbour
# counter-clockwise; with everyone circulating the same way, head-on pairs pass
ORBIT_RANGE = 0.22
ORBIT_GAIN = 3.0
# the barrier guards a slightly larger radius so position noise rarely breaches 0.15 m
BARRIER_BUFFER = 0.02

TWO_PI = 2.0 * math.pi
ROBUSTNESS_CEILING = math.hypot(ARENA_X[1] - ARENA_X[0], ARENA_Y[1] - ARENA_Y[0]) - SAFETY_DISTANCE


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class WorldState:
    agents: Tuple[AgentState, ...]
    time: float = 0.0

    def __post_init__(self):
        if len(self.agents) != N_AGENTS:
            raise InvalidInput(f"expected {N_AGENTS} agents, got {len(self.agents)}")

    def as_array(self) -> np.ndarray:
        return np.array([[a.x, a.y, a.theta] for a in self.agents])

    @classmethod
    def from_array(cls, arr, time: float = 0.0) -> "WorldState":
        return cls(tuple(AgentState(float(r[0]), float(r[1]), float(r[2])) for r in np.asarray(arr)), time)


@dataclass(frozen=True)
class ControllerParams:
    p1: float
    p2: float
    p3: float
    p4: float

    def __post_init__(self):
        for name, value, (lo, hi) in zip(("p1", "p2", "p3", "p4"), self.as_tuple(), PARAM_BOUNDS):
            if not lo <= value <= hi:
                raise InvalidInput(f"{name}={value} outside [{lo}, {hi}]")

    def as_tuple(self) -> tuple:
        return (self.p1, self.p2, self.p3, self.p4)

    def to_dict(self) -> dict:
        return {"p1": self.p1, "p2": self.p2, "p3": self.p3, "p4": self.p4}

    @classmethod
    def from_any(cls, value) -> "ControllerParams":
        if isinstance(value, ControllerParams):
            return value
        if isinstance(value, dict):
            return cls(**{k: float(v) for k, v in value.items()})
        return cls(*(float(v) for v in value))


DEFAULT_PARAMS = ControllerParams(1.0, 2.0, 1.0, 5.0)


@dataclass(frozen=True)
class ScenarioDraw:
    initial: WorldState
    goals: Tuple[Tuple[float, float], ...]
    seed: int
    attempts: int = 1

    def to_dict(self) -> dict:
        return {
            "initial": self.initial.as_array().tolist(),
            "goals": [list(g) for g in self.goals],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioDraw":
        return cls(
            initial=WorldState.from_array(data["initial"]),
            goals=tuple((float(g[0]), float(g[1])) for g in data["goals"]),
            seed=int(data["seed"]),
        )


@dataclass(frozen=True)
class Trajectory:
    timestep: float
    states: np.ndarray  # (steps + 1, 3 agents, [x, y, theta])
    params: ControllerParams
    draw: ScenarioDraw
    noise_model: str = "gaussian"

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.timestep

    @property
    def duration(self) -> float:
        return (self.states.shape[0] - 1) * self.timestep

    def world(self, k: int) -> WorldState:
        return WorldState.from_array(self.states[k], k * self.timestep)

    def to_csv(self, path) -> None:
        header = ["t"] + [f"{c}{i}" for i in range(1, N_AGENTS + 1) for c in ("x", "y", "theta")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, row in zip(self.times, self.states.reshape(self.states.shape[0], -1)):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


# --- task margins --------------------------------------------------------------

def h_g(world: WorldState) -> float:
    """Smallest pairwise planar distance minus the 0.15 m safety distance."""
    a = world.agents
    return min(
        math.hypot(a[i].x - a[j].x, a[i].y - a[j].y)
        for i in range(N_AGENTS)
        for j in range(i + 1, N_AGENTS)
    ) - SAFETY_DISTANCE


def h_f(world: WorldState, goals) -> float:
    """Largest ``0.1 - distance to own goal`` over the robots."""
    return max(GOAL_RADIUS - math.hypot(a.x - g[0], a.y - g[1]) for a, g in zip(world.agents, goals))


def _h_g_series(states: np.ndarray) -> np.ndarray:
    pos = states[:, :, :2]
    d01 = np.hypot(*(pos[:, 0] - pos[:, 1]).T)
    d02 = np.hypot(*(pos[:, 0] - pos[:, 2]).T)
    d12 = np.hypot(*(pos[:, 1] - pos[:, 2]).T)
    return np.minimum(np.minimum(d01, d02), d12) - SAFETY_DISTANCE


def _h_f_series(states: np.ndarray, goals) -> np.ndarray:
    g = np.asarray(goals, dtype=float)
    dist = np.hypot(states[:, :, 0] - g[:, 0], states[:, :, 1] - g[:, 1])
    return (GOAL_RADIUS - dist).max(axis=1)


def combine_robustness(rho_g: float, rho_f: float) -> float:
    """Piecewise combination of the safety and goal margins with a -0.1 floor."""
    if rho_g >= 0.0 and rho_f >= 0.0:
        return rho_g
    if rho_g < 0.0:
        return max(rho_g, ROBUSTNESS_FLOOR)
    return max(rho_f, ROBUSTNESS_FLOOR)


def robustness(traj: Trajectory, horizon: float = HORIZON) -> float:
    """Robustness of a trajectory covering at least ``horizon`` seconds.

    The safety margin is minimized and the goal margin maximized over every
    recorded state.
    """
    if traj.duration < horizon - 1e-9:
        raise InvalidInput(f"trajectory covers {traj.duration:.3f} s, need {horizon} s")
    rho_g = float(_h_g_series(traj.states).min())
    rho_f = float(_h_f_series(traj.states, traj.draw.goals).max())
    return combine_robustness(rho_g, rho_f)


# --- controller and filter -----------------------------------------------------

def _wrap_pi(a: float) -> float:
    # (-pi, pi]
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def _wrap_2pi(a: float) -> float:
    a = a % TWO_PI
    return 0.0 if a >= TWO_PI else a


def nominal_command(x: float, y: float, theta: float, goal, params: ControllerParams):
    """Go-to-goal ``(v, w)`` before safety filtering."""
    dx, dy = goal[0] - x, goal[1] - y
    d = math.hypot(dx, dy)
    if d < 1e-9:
        return 0.0, 0.0
    e = _wrap_pi(math.atan2(dy, dx) - theta)
    c = math.cos(e)
    v = min(max(params.p1 * d * c, 0.0), V_MAX)
    w = params.p2 * e + params.p3 * math.sin(e) * c
    return v, min(max(w, -W_MAX), W_MAX)


def _wall_limit(x: float, y: float, c: float, s: float, v: float, dt: float) -> float:
    # largest speed <= v whose Euler step stays inside the arena
    reach = v * dt
    if c > 0.0:
        reach = min(reach, (ARENA_X[1] - x) / c)
    elif c < 0.0:
        reach = min(reach, (ARENA_X[0] - x) / c)
    if s > 0.0:
        reach = min(reach, (ARENA_Y[1] - y) / s)
    elif s < 0.0:
        reach = min(reach, (ARENA_Y[0] - y) / s)
    return max(reach, 0.0) / dt


def _filter_speeds(px, py, cs, sn, v, decay) -> list:
    """Scale speeds down until every pair satisfies dh/dt >= -decay * h."""
    v = list(v)
    pairs = [(i, j) for i in range(N_AGENTS) for j in range(i + 1, N_AGENTS)]
    r2 = (SAFETY_DISTANCE + BARRIER_BUFFER) ** 2

    def terms(i, j):
        dx, dy = px[i] - px[j], py[i] - py[j]
        h = dx * dx + dy * dy - r2
        ci = 2.0 * (dx * cs[i] + dy * sn[i]) * v[i]
        cj = -2.0 * (dx * cs[j] + dy * sn[j]) * v[j]
        return h, ci, cj

    for _ in range(FILTER_ITERATIONS):
        changed = False
        for i, j in pairs:
            h, ci, cj = terms(i, j)
            slack = ci + cj + decay * h
            if slack >= -1e-12:
                continue
            pos = max(ci, 0.0) + max(cj, 0.0)
            neg = min(ci, 0.0) + min(cj, 0.0)
            if neg >= 0.0:
                continue  # already inside the margin and nobody is closing in
            scale = min(max((pos + decay * h) / -neg, 0.0), 1.0)
            if ci < 0.0:
                v[i] *= scale
            if cj < 0.0:
                v[j] *= scale
            changed = True
        if not changed:
            return v
    # did not settle: stop every robot still in a violating pair
    for _ in range(N_AGENTS):
        bad = False
        for i, j in pairs:
            h, ci, cj = terms(i, j)
            if min(ci, 0.0) + min(cj, 0.0) < 0.0 and ci + cj + decay * h < -1e-12:
                v[i] = v[j] = 0.0
                bad = True
        if not bad:
            break
    return v


def barrier_filter(world: WorldState, speeds: Sequence[float], p4: float, dt: float = DT) -> list:
    """Filtered forward speeds for the commanded ``speeds`` (headings from ``world``)."""
    a = world.agents
    return _filter_speeds(
        [s.x for s in a], [s.y for s in a],
        [math.cos(s.theta) for s in a], [math.sin(s.theta) for s in a],
        speeds, min(p4, 1.0 / dt),
    )


# --- integration ---------------------------------------------------------------

def _noise_block(rng: Optional[np.random.Generator], model: str, steps: int, sigma: float = NOISE_SIGMA):
    if model not in NOISE_MODELS:
        raise InvalidInput(f"unknown noise model {model!r}; choose from {NOISE_MODELS}")
    if model == "none" or rng is None:
        return None
    if model == "uniform":
        half = math.sqrt(3.0) * sigma
        return rng.uniform(-half, half, size=(steps, N_AGENTS, 2))
    out = rng.normal(0.0, sigma, size=(steps, N_AGENTS, 2))
    # truncate at 3 sigma by redrawing the tails
    bad = np.abs(out) > 3.0 * sigma
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(out) > 3.0 * sigma
    return out


def _command(i: int, px, py, th, goals, params: ControllerParams):
    """Go-to-goal command, or a counter-clockwise orbit of the nearest robot when it blocks the way."""
    x, y, t = px[i], py[i], th[i]
    gx, gy = goals[i]
    j = min((k for k in range(N_AGENTS) if k != i), key=lambda k: (x - px[k]) ** 2 + (y - py[k]) ** 2)
    ox, oy = x - px[j], y - py[j]
    gap = math.hypot(ox, oy)
    reach = math.hypot(gx - x, gy - y)
    guard = SAFETY_DISTANCE + BARRIER_BUFFER
    # neighbour close and the goal lies beyond it, or already inside the guard
    if gap < guard or (gap < ORBIT_RANGE and (gx - x) * ox + (gy - y) * oy < 0.0 and reach > gap):
        # turn from the orbit tangent toward straight away as penetration grows
        depth = min(max((guard - gap) / BARRIER_BUFFER, 0.0), 1.0) if BARRIER_BUFFER > 0 else float(gap < guard)
        e = _wrap_pi(math.atan2(oy, ox) + 0.5 * math.pi * (1.0 - depth) - t)
        v = max(min(params.p1 * reach, V_MAX), depth * V_MAX) * max(math.cos(e), 0.0)
        w = min(max(ORBIT_GAIN * e, -W_MAX), W_MAX)
        return v, w
    return nominal_command(x, y, t, goals[i], params)


def _advance(px, py, th, goals, params: ControllerParams, dt: float, noise_row):
    """One closed-loop Euler step on plain lists; mutates ``px, py, th``."""
    cs = [math.cos(t) for t in th]
    sn = [math.sin(t) for t in th]
    v = [0.0] * N_AGENTS
    w = [0.0] * N_AGENTS
    for i in range(N_AGENTS):
        vi, w[i] = _command(i, px, py, th, goals, params)
        v[i] = _wall_limit(px[i], py[i], cs[i], sn[i], vi, dt)
    v = _filter_speeds(px, py, cs, sn, v, min(params.p4, 1.0 / dt))
    for i in range(N_AGENTS):
        x = px[i] + v[i] * cs[i] * dt
        y = py[i] + v[i] * sn[i] * dt
        if noise_row is not None:
            x += noise_row[i][0]
            y += noise_row[i][1]
        px[i] = min(max(x, ARENA_X[0]), ARENA_X[1])
        py[i] = min(max(y, ARENA_Y[0]), ARENA_Y[1])
        th[i] = _wrap_2pi(th[i] + w[i] * dt)


def step(
    world: WorldState,
    params: ControllerParams,
    goals,
    noise_rng: Optional[np.random.Generator] = None,
    dt: float = DT,
    noise_model: str = "gaussian",
) -> WorldState:
    """Advance ``world`` by one timestep ``dt``."""
    if not dt > 0:
        raise InvalidInput("dt must be positive")
    px = [a.x for a in world.agents]
    py = [a.y for a in world.agents]
    th = [a.theta for a in world.agents]
    block = _noise_block(noise_rng, noise_model, 1)
    _advance(px, py, th, goals, params, dt, None if block is None else block[0].tolist())
    return WorldState(tuple(AgentState(*s) for s in zip(px, py, th)), world.time + dt)


def n_steps(horizon: float, dt: float) -> int:
    return int(math.ceil(horizon / dt - 1e-9))


def rollout(
    draw: ScenarioDraw,
    params: ControllerParams,
    dt: float = DT,
    horizon: float = HORIZON,
    noise_model: str = "gaussian",
) -> Trajectory:
    """Closed-loop trajectory from ``draw``; bit-identical for equal inputs."""
    if not dt > 0:
        raise InvalidInput("dt must be positive")
    steps = n_steps(horizon, dt)
    noise = _noise_block(np.random.default_rng(draw.seed), noise_model, steps)
    noise_rows = noise.tolist() if noise is not None else None
    init = draw.initial.as_array()
    px, py, th = init[:, 0].tolist(), init[:, 1].tolist(), init[:, 2].tolist()
    goals = [tuple(g) for g in draw.goals]
    out = np.empty((steps + 1, N_AGENTS, 3))
    out[0] = init
    for k in range(steps):
        _advance(px, py, th, goals, params, dt, None if noise_rows is None else noise_rows[k])
        out[k + 1, :, 0] = px
        out[k + 1, :, 1] = py
        out[k + 1, :, 2] = th
    return Trajectory(dt, out, params, draw, noise_model)


# --- scenario sampling ---------------------------------------------------------

def _separated(points: np.ndarray) -> bool:
    d = [
        math.hypot(points[i, 0] - points[j, 0], points[i, 1] - points[j, 1])
        for i in range(N_AGENTS)
        for j in range(i + 1, N_AGENTS)
    ]
    return min(d) - SAFETY_DISTANCE >= SEPARATION_MARGIN


def _uniform_planar(rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([
        rng.uniform(*ARENA_X, size=N_AGENTS),
        rng.uniform(*ARENA_Y, size=N_AGENTS),
    ])


def sample_scenario(rng: np.random.Generator, cap: int = REJECTION_CAP) -> ScenarioDraw:
    """Uniform initial poses and goals, each set with h_g >= 0.3 (rejection sampling)."""
    attempts = 0
    while True:
        attempts += 1
        if attempts > cap:
            raise SearchError(f"no valid initial configuration after {cap} attempts")
        pos = _uniform_planar(rng)
        theta = rng.uniform(0.0, TWO_PI, size=N_AGENTS)
        if _separated(pos):
            break
    while True:
        attempts += 1
        if attempts > 2 * cap:
            raise SearchError(f"no valid goal configuration after {cap} attempts")
        goals = _uniform_planar(rng)
        if _separated(goals):
            break
    initial = WorldState.from_array(np.column_stack([pos, theta]))
    seed = int(rng.integers(0, 2**63 - 1))
    return ScenarioDraw(initial, tuple((float(g[0]), float(g[1])) for g in goals), seed, attempts)


def sample_params(rng: np.random.Generator, bounds=PARAM_BOUNDS) -> ControllerParams:
    """Uniform draw from the box ``bounds`` (defaults to the full parameter space)."""
    return ControllerParams(*(float(rng.uniform(lo, hi)) for lo, hi in bounds))
