"""Gaussian control policy with independent per-dimension variance.

A single dense backbone maps the state to 2*action_dim outputs: the first
half is the mean, the second half the raw log-std. Raw log-stds are clamped
to [-5, 2] before exponentiation so densities stay finite; the clamp mask is
exposed to the loss modules because clamped dimensions carry no log-std
gradient. Actions are never squashed; sampling returns mean + std * z
unclipped (clipping to the action bounds happens at environment-execution
time only), while ``mean_action`` clips since it is the execution-time
deterministic action.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from counterbc import nn

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))

POLICY_FORMAT_VERSION = 1


@dataclass
class PolicyOutput:
    """Mean and clamped log-std vectors for one state."""

    mean: np.ndarray
    log_std: np.ndarray


@dataclass
class GaussianPolicy:
    backbone: nn.DenseNetwork
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    log_std_min: float = LOG_STD_MIN
    log_std_max: float = LOG_STD_MAX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.action_low = np.asarray(self.action_low, dtype=np.float64)
        self.action_high = np.asarray(self.action_high, dtype=np.float64)
        if self.backbone.out_width != 2 * self.action_dim:
            raise nn.DimensionError(
                f"backbone emits {self.backbone.out_width} outputs, "
                f"expected {2 * self.action_dim} (mean and log-std per action dim)"
            )
        if self.action_low.shape != (self.action_dim,) or self.action_high.shape != (
            self.action_dim,
        ):
            raise nn.DimensionError("action bounds must have shape (action_dim,)")

    @property
    def state_dim(self) -> int:
        return self.backbone.in_width

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(
            backbone=self.backbone.copy(),
            action_dim=self.action_dim,
            action_low=self.action_low.copy(),
            action_high=self.action_high.copy(),
            log_std_min=self.log_std_min,
            log_std_max=self.log_std_max,
            meta=dict(self.meta),
        )

    def head(self, s: np.ndarray) -> PolicyOutput:
        out = self.backbone.forward(np.asarray(s, dtype=np.float64))
        mean = out[: self.action_dim]
        log_std = np.clip(out[self.action_dim :], self.log_std_min, self.log_std_max)
        return PolicyOutput(mean=mean, log_std=log_std)

    def head_batch(self, states: np.ndarray):
        """(means, clamped log-stds) for a batch of states."""
        out = self.backbone.forward_batch(states)
        mean = out[:, : self.action_dim]
        log_std = np.clip(out[:, self.action_dim :], self.log_std_min, self.log_std_max)
        return mean, log_std

    def head_batch_cached(self, states: np.ndarray):
        """Batch head plus backward plumbing for the loss modules.

        Returns (mean, log_std, clamp_mask, cache): ``clamp_mask`` is 1 where
        the raw log-std was strictly inside the clamp range (gradient flows),
        0 where it was clamped; ``cache`` feeds ``head_backward``.
        """
        out, cache = self.backbone.forward_batch_cached(states)
        raw = out[:, self.action_dim :]
        mean = out[:, : self.action_dim]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        clamp_mask = ((raw > self.log_std_min) & (raw < self.log_std_max)).astype(np.float64)
        return mean, log_std, clamp_mask, cache

    def head_backward(self, cache, g_mean: np.ndarray, g_log_std: np.ndarray) -> nn.Gradients:
        """Map gradients w.r.t. (mean, clamped log-std) to parameter gradients.

        ``g_log_std`` must already be multiplied by the clamp mask.
        """
        gout = np.concatenate([g_mean, g_log_std], axis=1)
        return nn.backward_from_cache(self.backbone, cache, gout)

    def log_prob(self, s: np.ndarray, a: np.ndarray) -> float:
        """Log-density of action a under the policy at state s."""
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (self.action_dim,):
            raise nn.DimensionError(f"action shape {a.shape} != ({self.action_dim},)")
        out = self.head(s)
        return float(gaussian_log_prob(a, out.mean, out.log_std))

    def log_prob_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.float64)
        mean, log_std = self.head_batch(states)
        if actions.shape != mean.shape:
            raise nn.DimensionError(
                f"actions shape {actions.shape} does not match states batch {mean.shape}"
            )
        return gaussian_log_prob(actions, mean, log_std)

    def sample(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Reparameterized draw mean + std * z; not clipped to the bounds."""
        out = self.head(s)
        z = rng.standard_normal(self.action_dim)
        return out.mean + np.exp(out.log_std) * z

    def mean_action(self, s: np.ndarray) -> np.ndarray:
        """Deterministic action: the mean clipped to the action bounds."""
        out = self.head(s)
        return np.clip(out.mean, self.action_low, self.action_high)

    def entropy(self, s: np.ndarray) -> float:
        """Differential entropy of the Gaussian at state s."""
        out = self.head(s)
        return float(np.sum(out.log_std + 0.5 * (LOG_2PI + 1.0)))


def gaussian_log_prob(a: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log-density, summed over the trailing axis."""
    z = (a - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def make_policy(
    state_dim: int,
    action_dim: int,
    action_low,
    action_high,
    hidden: int = 256,
    rng: np.random.Generator | None = None,
    meta: dict | None = None,
) -> GaussianPolicy:
    """Two-hidden-layer ReLU backbone, Glorot-initialized."""
    if rng is None:
        rng = np.random.default_rng()
    backbone = nn.glorot_init((state_dim, hidden, hidden, 2 * action_dim), rng)
    return GaussianPolicy(
        backbone=backbone,
        action_dim=action_dim,
        action_low=np.asarray(action_low, dtype=np.float64),
        action_high=np.asarray(action_high, dtype=np.float64),
        meta=meta or {},
    )


def constant_policy(mean, log_std, action_low=None, action_high=None) -> GaussianPolicy:
    """State-independent policy (zero-weight backbone with bias outputs).

    Handy for tests and closed-form checks: the 1-input backbone emits the
    given mean and log-std at every state.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    log_std = np.broadcast_to(
        np.asarray(log_std, dtype=np.float64), mean.shape
    ).astype(np.float64)
    da = mean.shape[0]
    widths = (1, 2 * da)
    weights = [np.zeros((2 * da, 1))]
    biases = [np.concatenate([mean, log_std])]
    if action_low is None:
        action_low = -np.inf * np.ones(da)
    if action_high is None:
        action_high = np.inf * np.ones(da)
    return GaussianPolicy(
        backbone=nn.DenseNetwork(widths, weights, biases),
        action_dim=da,
        action_low=action_low,
        action_high=action_high,
    )


def policy_to_dict(policy: GaussianPolicy) -> dict:
    return {
        "format_version": POLICY_FORMAT_VERSION,
        "kind": "gaussian_policy",
        "network": nn.network_to_dict(policy.backbone),
        "action_dim": policy.action_dim,
        "action_low": policy.action_low.tolist(),
        "action_high": policy.action_high.tolist(),
        "log_std_min": policy.log_std_min,
        "log_std_max": policy.log_std_max,
        "meta": policy.meta,
    }


def policy_from_dict(doc: dict) -> GaussianPolicy:
    version = doc.get("format_version")
    if version != POLICY_FORMAT_VERSION:
        raise ValueError(f"unsupported policy format_version: {version!r}")
    if doc.get("kind") != "gaussian_policy":
        raise ValueError(f"not a gaussian policy checkpoint: {doc.get('kind')!r}")
    return GaussianPolicy(
        backbone=nn.network_from_dict(doc["network"]),
        action_dim=int(doc["action_dim"]),
        action_low=np.asarray(doc["action_low"], dtype=np.float64),
        action_high=np.asarray(doc["action_high"], dtype=np.float64),
        log_std_min=float(doc["log_std_min"]),
        log_std_max=float(doc["log_std_max"]),
        meta=doc.get("meta", {}),
    )


def save_policy(policy: GaussianPolicy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(policy), fh)


def load_policy(path) -> GaussianPolicy:
    with open(path, encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))
