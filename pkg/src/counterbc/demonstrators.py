"""Synthetic teachers: optimal controllers plus controlled corruption.

Each env has a deterministic optimal controller. Demonstrations corrupt its
actions with one of three noise kinds and the corrupted action is what gets
EXECUTED, not just recorded: the visited states must come from the imperfect
behavior, since that is the distribution a learner will face. Recorded
actions are the executed (bound-clipped) ones, so every stored pair
satisfies a = clip(a* + eps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from counterbc import envs as envmod
from counterbc.dataset import Dataset

# balancing gains for the cart-pole teacher, action = clip(-K @ state, -1, 1).
# Derived by tools/derive_lqr_gains.py (finite-difference linearization of
# the exact discrete step at the upright equilibrium, then a discrete
# Riccati iteration with Q = I, R = 0.1). Survives 200 steps from every
# seeded initial state.
CARTPOLE_LQR_GAINS = np.array(
    [-1.74793793730125, -2.865328849194182, -15.80933226463617, -4.282996163152357]
)

# the intersection teacher stages here until the other car has passed
INTERSECTION_WAIT_POINT = np.array([0.0, -0.3])
INTERSECTION_PASS_MARGIN = 0.25

NOISE_KINDS = ("uniform", "gaussian", "random")


@dataclass(frozen=True)
class NoiseModel:
    """Corruption law: kind in {uniform, gaussian, random}, scale sigma.

    uniform adds iid U(-sigma, sigma) per dimension; gaussian adds iid
    N(0, sigma^2); random keeps the optimal action with probability
    1 - sigma and otherwise adds U(-sigma, sigma), so its sigma doubles as
    a probability and must stay within [0, 1].
    """

    kind: str
    sigma: float

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.kind == "random" and self.sigma > 1:
            raise ValueError("random-kind sigma is a probability and must be <= 1")


@dataclass(frozen=True)
class OptimalTeacher:
    """Deterministic optimal controller for one env id."""

    env_id: str

    def __post_init__(self):
        if self.env_id not in envmod.env_ids():
            raise ValueError(f"unknown env {self.env_id!r}")

    def mean_action(self, s: np.ndarray) -> np.ndarray:
        """Rollout-compatible alias for teacher_action."""
        return teacher_action(self, s)


def teacher_action(teacher: OptimalTeacher, s: np.ndarray) -> np.ndarray:
    """The ideal action a* at state s."""
    s = np.asarray(s, dtype=np.float64)
    if teacher.env_id == "absval":
        return np.array([envmod.absval_target(s[0])])
    if teacher.env_id == "cartpole":
        return np.clip(np.array([-CARTPOLE_LQR_GAINS @ s]), -1.0, 1.0)
    # intersection: head for the goal, but stage short of the crossing
    # until the other car has passed the ego's lane
    ego, other = s[:2], s[2:]
    passed = other[0] > ego[0] + INTERSECTION_PASS_MARGIN
    target = envmod.GOAL if passed else INTERSECTION_WAIT_POINT
    return np.clip((target - ego) / envmod.EGO_SPEED, -1.0, 1.0)


def corrupt(
    a_star: np.ndarray,
    noise: NoiseModel,
    rng: np.random.Generator,
    spec: envmod.ActionSpec,
) -> np.ndarray:
    """a = clip(a* + eps) under the given noise law."""
    a_star = np.asarray(a_star, dtype=np.float64)
    if noise.kind == "uniform":
        eps = rng.uniform(-noise.sigma, noise.sigma, size=a_star.shape)
    elif noise.kind == "gaussian":
        eps = noise.sigma * rng.standard_normal(a_star.shape)
    else:  # random: one coin per action
        if rng.random() < 1.0 - noise.sigma:
            eps = np.zeros_like(a_star)
        else:
            eps = rng.uniform(-noise.sigma, noise.sigma, size=a_star.shape)
    return spec.clip(a_star + eps)


def generate_dataset(
    env,
    teacher: OptimalTeacher,
    noise: NoiseModel,
    n_pairs: int,
    rng: np.random.Generator,
) -> Dataset:
    """Exactly n_pairs demonstration pairs from noisy teaching.

    Rolls episodes executing the corrupted action each step (absval has no
    dynamics, so it samples states uniformly instead); episode boundaries
    are invisible in the output, only the pair count matters.
    """
    if n_pairs < 1:
        raise ValueError(f"need at least one pair, got {n_pairs}")
    spec = env.action_spec
    states = np.empty((n_pairs, env.state_dim))
    actions = np.empty((n_pairs, spec.dim))

    if env.env_id == "absval":
        for i in range(n_pairs):
            s = rng.uniform(-1.0, 1.0, size=1)
            a = corrupt(teacher_action(teacher, s), noise, rng, spec)
            states[i] = s
            actions[i] = a
    else:
        filled = 0
        while filled < n_pairs:
            s = env.reset(rng)
            for _ in range(env.horizon):
                a = corrupt(teacher_action(teacher, s), noise, rng, spec)
                result = env.step(a)
                states[filled] = s
                actions[filled] = a
                filled += 1
                s = result.state
                if result.terminal or filled == n_pairs:
                    break

    return Dataset(
        states,
        actions,
        provenance={
            "env": env.env_id,
            "teacher": "optimal",
            "noise_kind": noise.kind,
            "sigma": noise.sigma,
            "n_pairs": n_pairs,
        },
    )
