"""Three desk-scale control environments with exact dynamics.

* absval: one-step supervised task, state s uniform in [-1,1], ideal action
  |s| - 0.5. Its score is the negative mean squared error of the policy's
  deterministic action over a fixed 101-point grid, so higher-is-better
  holds across all envs.
* cartpole: force-controlled inverted pendulum, semi-implicit Euler at
  dt=0.02 with the standard constants; +1 reward per step, terminal when
  the pole passes 12 degrees, the cart leaves +-2.4 m, or 200 steps elapse.
* intersection: planar two-car crossing. The ego car moves by 0.1*a per
  step toward a fixed goal; the other car drives west to east and yields
  (slows) when it gets close to the ego's straight-line path to the goal.
  Reward is a distance-to-goal penalty plus -10 on collision; reaching the
  goal ends the episode with the distance penalty waived.

Steps are pure functions of (state, action); randomness enters only through
seeded resets. Each instance is a single-owner state machine: run one per
worker, never share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ActionSpec:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "low", np.asarray(self.low, dtype=np.float64))
        object.__setattr__(self, "high", np.asarray(self.high, dtype=np.float64))
        if not (np.isfinite(self.low).all() and np.isfinite(self.high).all()):
            raise ValueError("action bounds must be finite")
        if (self.high <= self.low).any():
            raise ValueError("action bounds must satisfy low < high")

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    @property
    def a_max(self) -> float:
        """Magnitude of the largest representable action (max-norm)."""
        return float(np.max(np.maximum(np.abs(self.low), np.abs(self.high))))

    def clip(self, a: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(a, dtype=np.float64), self.low, self.high)


@dataclass
class EnvStepResult:
    state: np.ndarray
    reward: float
    terminal: bool
    info: dict = field(default_factory=dict)


class AbsValEnv:
    """One-step function-recovery task: ideal action is |s| - 0.5."""

    env_id = "absval"
    state_dim = 1
    horizon = 1
    teleoperable = False

    def __init__(self):
        self.action_spec = ActionSpec(low=np.array([-1.0]), high=np.array([1.0]))
        self._state = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._state = rng.uniform(-1.0, 1.0, size=1)
        return self._state.copy()

    def step(self, a) -> EnvStepResult:
        a = self.action_spec.clip(a)
        err = float(a[0] - absval_target(self._state[0]))
        return EnvStepResult(
            state=self._state.copy(), reward=-err * err, terminal=True, info={}
        )

    def render(self, state) -> dict:
        return {"kind": "absval", "s": float(state[0])}


def absval_target(s: float) -> float:
    """Ideal action for the function-recovery task."""
    return abs(float(s)) - 0.5


# cart-pole constants (standard benchmark formulation)
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
GRAVITY = 9.8
FORCE_SCALE = 10.0
CART_DT = 0.02
ANGLE_LIMIT = 12.0 * math.pi / 180.0
POSITION_LIMIT = 2.4
CART_HORIZON = 200


class CartpoleEnv:
    """Continuous-force cart-pole; state [x, x_dot, theta, theta_dot]."""

    env_id = "cartpole"
    state_dim = 4
    horizon = CART_HORIZON
    teleoperable = True

    def __init__(self):
        self.action_spec = ActionSpec(low=np.array([-1.0]), high=np.array([1.0]))
        self._state = None
        self._steps = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._state = rng.uniform(-0.05, 0.05, size=4)
        self._steps = 0
        return self._state.copy()

    def step(self, a) -> EnvStepResult:
        a = self.action_spec.clip(a)
        self._state = cartpole_dynamics(self._state, float(a[0]))
        self._steps += 1
        x, _, theta, _ = self._state
        # plain bool: the flag travels into JSON wire messages
        fell = bool(abs(theta) > ANGLE_LIMIT or abs(x) > POSITION_LIMIT)
        terminal = fell or self._steps >= CART_HORIZON
        return EnvStepResult(
            state=self._state.copy(),
            reward=1.0,
            terminal=terminal,
            info={"fell": fell},
        )

    def render(self, state) -> dict:
        return {
            "kind": "cartpole",
            "cart_x": float(state[0]),
            "pole_angle": float(state[2]),
            "pole_half_length": POLE_HALF_LENGTH,
            "position_limit": POSITION_LIMIT,
            "angle_limit": ANGLE_LIMIT,
        }


def cartpole_dynamics(state: np.ndarray, a: float) -> np.ndarray:
    """One semi-implicit Euler step of the cart-pole equations.

    Velocities integrate first and the new velocities move the positions.
    """
    x, x_dot, theta, theta_dot = state
    force = FORCE_SCALE * a
    total_mass = CART_MASS + POLE_MASS
    pole_ml = POLE_MASS * POLE_HALF_LENGTH
    sin_t, cos_t = math.sin(theta), math.cos(theta)

    temp = (force + pole_ml * theta_dot * theta_dot * sin_t) / total_mass
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_t * cos_t / total_mass)
    )
    x_acc = temp - pole_ml * theta_acc * cos_t / total_mass

    x_dot = x_dot + CART_DT * x_acc
    x = x + CART_DT * x_dot
    theta_dot = theta_dot + CART_DT * theta_acc
    theta = theta + CART_DT * theta_dot
    return np.array([x, x_dot, theta, theta_dot])


# intersection constants
EGO_SPEED = 0.1
OTHER_SPEED = 0.05
OTHER_YIELD_RANGE = 0.4
OTHER_MIN_FACTOR = 0.25
COLLISION_DIST = 0.2
GOAL_DIST = 0.1
GOAL = np.array([0.0, 1.0])
EGO_SPAWN_Y = -1.0
EGO_SPAWN_JITTER = 0.1
OTHER_SPAWN = np.array([-1.0, 0.0])
INTERSECTION_HORIZON = 100


class IntersectionEnv:
    """Two-car crossing; state [ego_x, ego_y, other_x, other_y]."""

    env_id = "intersection"
    state_dim = 4
    horizon = INTERSECTION_HORIZON
    teleoperable = True

    def __init__(self):
        self.action_spec = ActionSpec(
            low=np.array([-1.0, -1.0]), high=np.array([1.0, 1.0])
        )
        self._state = None
        self._steps = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        ego_x = rng.uniform(-EGO_SPAWN_JITTER, EGO_SPAWN_JITTER)
        self._state = np.array(
            [ego_x, EGO_SPAWN_Y, OTHER_SPAWN[0], OTHER_SPAWN[1]]
        )
        self._steps = 0
        return self._state.copy()

    def step(self, a) -> EnvStepResult:
        a = self.action_spec.clip(a)
        ego = self._state[:2] + EGO_SPEED * a
        other = self._state[2:].copy()
        other[0] += other_agent_speed(ego, other)
        self._state = np.concatenate([ego, other])
        self._steps += 1

        gap = float(np.linalg.norm(ego - other))
        goal_dist = float(np.linalg.norm(ego - GOAL))
        collided = gap < COLLISION_DIST
        at_goal = goal_dist < GOAL_DIST
        reward = (0.0 if at_goal else -0.1 * goal_dist) - 10.0 * collided
        terminal = collided or at_goal or self._steps >= INTERSECTION_HORIZON
        return EnvStepResult(
            state=self._state.copy(),
            reward=reward,
            terminal=terminal,
            info={"collision": collided, "at_goal": at_goal},
        )

    def render(self, state) -> dict:
        return {
            "kind": "intersection",
            "ego": [float(state[0]), float(state[1])],
            "other": [float(state[2]), float(state[3])],
            "goal": GOAL.tolist(),
            "goal_dist": GOAL_DIST,
            "collision_dist": COLLISION_DIST,
        }


def other_agent_speed(ego: np.ndarray, other: np.ndarray) -> float:
    """West-east speed of the other car, yielding near the ego's path.

    The ego's intended path is the segment from its position to the goal;
    the closer the other car is to that segment, the slower it drives,
    floored at a quarter of full speed.
    """
    d = _point_segment_distance(other, ego, GOAL)
    return OTHER_SPEED * float(np.clip(d / OTHER_YIELD_RANGE, OTHER_MIN_FACTOR, 1.0))


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


_ENVS = {
    "absval": AbsValEnv,
    "cartpole": CartpoleEnv,
    "intersection": IntersectionEnv,
}


def env_ids() -> list[str]:
    return sorted(_ENVS)


def make_env(env_id: str):
    try:
        return _ENVS[env_id]()
    except KeyError:
        raise ValueError(f"unknown env {env_id!r}, expected one of {env_ids()}") from None


def rollout(env, policy, rng: np.random.Generator, horizon: int | None = None,
            deterministic: bool = True):
    """Run one episode; returns (total reward, [(s, a_executed, r, terminal)]).

    ``policy`` is anything with mean_action / sample taking the raw state;
    executed actions are clipped to the env bounds before stepping and the
    clipped value is what the trajectory records.
    """
    if horizon is None:
        horizon = env.horizon
    s = env.reset(rng)
    total = 0.0
    trajectory = []
    for _ in range(horizon):
        a = policy.mean_action(s) if deterministic else policy.sample(s, rng)
        a = env.action_spec.clip(a)
        result = env.step(a)
        total += result.reward
        trajectory.append((s, a, result.reward, result.terminal))
        s = result.state
        if result.terminal:
            break
    return total, trajectory


ABSVAL_EVAL_GRID = np.linspace(-1.0, 1.0, 101)


def evaluate_policy(env, policy, rng: np.random.Generator, episodes: int = 10,
                    deterministic: bool = True) -> float:
    """Higher-is-better score: mean return, or -grid MSE for absval."""
    if env.env_id == "absval":
        errs = [
            float(policy.mean_action(np.array([s]))[0]) - absval_target(s)
            for s in ABSVAL_EVAL_GRID
        ]
        return -float(np.mean(np.square(errs)))
    returns = [
        rollout(env, policy, rng, deterministic=deterministic)[0]
        for _ in range(episodes)
    ]
    return float(np.mean(returns))
