"""Training objectives for Gaussian policies over demonstration minibatches.

Four losses share one gradient plumbing:

* counterfactual BC: each demonstrated action is grouped with M nearby
  alternatives (uniform draws from the L2 ball of radius delta, clipped to
  the action bounds, sampled once up front and frozen). The policy's
  log-densities over each group are renormalized with a softmax into a
  discrete classifier, and the loss is the cross term -sum(phat * log pi)
  averaged over pairs. With delta=0 the group is the demonstrated action
  alone, the classifier is identically 1, and the loss reduces to plain BC
  bit-for-bit. Gradients flow through both the classifier and the
  log-density factor unless ``detach_classifier`` is set.
* plain BC: mean negative log-likelihood of the demonstrated actions.
* mode-seeking reweighted BC: NLL weighted by the density of a frozen
  earlier snapshot of the policy, normalized to batch mean 1 so the
  effective step size matches BC.
* state-expertise weighted BC: NLL weighted by a learned per-state weight
  rho = sigmoid(expertise_net(s)) in [0,1], plus lam_reg*(1-rho)^2 to keep
  rho from collapsing to 0. Both networks receive gradients.

All losses use mean reduction over the batch and report finite scalars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from counterbc import nn
from counterbc.dataset import Dataset
from counterbc.policy import LOG_2PI, GaussianPolicy

DEFAULT_M = 16
DEFAULT_LAM_REG = 0.1
DEFAULT_SYNC_EPOCHS = 10

_CONTAIN_TOL = 1e-12


@dataclass
class CounterfactualBatch:
    """Per-pair action groups: element 0 is the demonstrated action.

    ``actions`` has shape (n, K, action_dim) with K = m+1 (or K = 1 when
    delta = 0). Every row satisfies ||a_k - a_0||_2 <= delta + 1e-12 and the
    per-dimension bounds.
    """

    actions: np.ndarray
    delta: float
    m: int
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.low = np.asarray(self.low, dtype=np.float64)
        self.high = np.asarray(self.high, dtype=np.float64)
        if self.actions.ndim != 3:
            raise ValueError("counterfactual actions must have shape (n, K, action_dim)")
        if self.delta < 0:
            raise ValueError(f"radius must be non-negative, got {self.delta}")
        diff = self.actions - self.actions[:, :1, :]
        norms = np.sqrt(np.sum(diff * diff, axis=2))
        if norms.max(initial=0.0) > self.delta + _CONTAIN_TOL:
            raise ValueError(
                f"counterfactual at distance {norms.max()} exceeds radius {self.delta}"
            )
        if (self.actions < self.low - _CONTAIN_TOL).any() or (
            self.actions > self.high + _CONTAIN_TOL
        ).any():
            raise ValueError("counterfactual actions violate the action bounds")

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def set_size(self) -> int:
        return self.actions.shape[1]

    def take(self, idx: np.ndarray) -> "CounterfactualBatch":
        """Row subset for minibatching; shares the frozen samples."""
        return CounterfactualBatch(
            self.actions[idx], self.delta, self.m, self.low, self.high
        )


def sample_counterfactuals(
    ds: Dataset,
    delta: float,
    m: int,
    low,
    high,
    rng: np.random.Generator,
) -> CounterfactualBatch:
    """Group each demonstrated action with m uniform L2-ball neighbors.

    Draws use the radial inverse CDF r = delta * u^(1/d) times a uniformly
    random direction, then clip to the bounds. Clipping projects onto a
    convex box that contains the center, which never increases the distance
    to the center, so the radius invariant survives. Called once before
    training; the samples are frozen for every epoch.
    """
    if delta < 0:
        raise ValueError(f"radius must be non-negative, got {delta}")
    if m < 0:
        raise ValueError(f"sample count must be non-negative, got {m}")
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    a = ds.actions
    n, d = a.shape
    if delta == 0 or m == 0:
        return CounterfactualBatch(a[:, None, :].copy(), delta, 0, low, high)

    direction = rng.standard_normal((n, m, d))
    direction /= np.linalg.norm(direction, axis=2, keepdims=True)
    radius = delta * rng.random((n, m)) ** (1.0 / d)
    drawn = a[:, None, :] + radius[:, :, None] * direction
    drawn = np.clip(drawn, low, high)
    actions = np.concatenate([a[:, None, :], drawn], axis=1)
    return CounterfactualBatch(actions, delta, m, low, high)


@dataclass
class LossReport:
    """Scalar loss plus optional decomposition diagnostics.

    For the counterfactual loss, ``entropy`` is the mean entropy of the
    per-pair classifier and ``kl`` the mean divergence between classifier
    and raw log-densities; their sum recovers the loss to roundoff. ``kl``
    can be negative because the second argument is a density, not a
    distribution over the group.
    """

    loss: float
    entropy: float | None = None
    kl: float | None = None


def _check_batch(states: np.ndarray, count: int) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("batch must be a non-empty 2-d state array")
    if states.shape[0] != count:
        raise ValueError(f"{states.shape[0]} states vs {count} action rows")
    return states


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def restricted_classifier(policy: GaussianPolicy, s: np.ndarray, cset: np.ndarray) -> np.ndarray:
    """Softmax over the policy's log-densities of the grouped actions.

    Singleton groups give [1.0] exactly; the output always sums to 1.
    """
    cset = np.asarray(cset, dtype=np.float64)
    if cset.ndim != 2 or cset.shape[0] == 0:
        raise ValueError("cset must be a non-empty (K, action_dim) array")
    out = policy.head(s)
    lp = _group_log_probs(cset[None, :, :], out.mean[None, :], out.log_std[None, :])[0]
    return np.exp(_log_softmax(lp))


def _group_log_probs(cf: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """log pi(a_k | s_i) for cf (n, K, d) against per-state heads (n, d)."""
    inv_std = np.exp(-log_std)
    z = (cf - mean[:, None, :]) * inv_std[:, None, :]
    return (
        -0.5 * np.sum(z * z, axis=2)
        - np.sum(log_std, axis=1)[:, None]
        - 0.5 * LOG_2PI * cf.shape[2]
    )


def counter_bc_loss(
    policy: GaussianPolicy,
    states: np.ndarray,
    cfbatch: CounterfactualBatch,
    detach_classifier: bool = False,
):
    """Cross term -phat . log pi per pair, averaged; returns (report, grads).

    With ``detach_classifier`` the softmax weights are treated as constants
    (gradient -p_k per score); otherwise the full product rule applies
    (gradient -p_k * (1 + score_k - mean score)).
    """
    n = len(cfbatch)
    states = _check_batch(states, n)
    cf = cfbatch.actions

    mean, log_std, clamp_mask, cache = policy.head_batch_cached(states)
    inv_std = np.exp(-log_std)
    z = (cf - mean[:, None, :]) * inv_std[:, None, :]
    scores = (
        -0.5 * np.sum(z * z, axis=2)
        - np.sum(log_std, axis=1)[:, None]
        - 0.5 * LOG_2PI * cf.shape[2]
    )

    log_p = _log_softmax(scores)
    p = np.exp(log_p)
    per_pair = -np.sum(p * scores, axis=1)
    loss = float(per_pair.mean())

    entropy = float(np.mean(-np.sum(p * log_p, axis=1)))
    kl = float(np.mean(np.sum(p * (log_p - scores), axis=1)))

    if detach_classifier:
        g_scores = -p / n
    else:
        score_bar = np.sum(p * scores, axis=1, keepdims=True)
        g_scores = -p * (1.0 + scores - score_bar) / n

    # chain rule into the Gaussian head: dscore/dmu = z/std, dscore/dlogstd = z^2-1
    g_mean = np.einsum("nk,nkd,nd->nd", g_scores, z, inv_std)
    g_log_std = np.einsum("nk,nkd->nd", g_scores, z * z - 1.0) * clamp_mask
    grads = policy.head_backward(cache, g_mean, g_log_std)
    return LossReport(loss=loss, entropy=entropy, kl=kl), grads


def _weighted_nll(policy, states, actions, weights):
    """Shared core: loss = mean(w * -log pi(a|s)); weights None means all 1."""
    n = states.shape[0]
    mean, log_std, clamp_mask, cache = policy.head_batch_cached(states)
    inv_std = np.exp(-log_std)
    z = (actions - mean) * inv_std
    lp = np.sum(-0.5 * z * z - log_std, axis=1) - 0.5 * LOG_2PI * actions.shape[1]
    nll = -lp
    w = np.ones(n) if weights is None else weights
    loss = float(np.mean(w * nll))

    c = (-w / n)[:, None]  # dloss/dscore per pair
    g_mean = c * z * inv_std
    g_log_std = c * (z * z - 1.0) * clamp_mask
    grads = policy.head_backward(cache, g_mean, g_log_std)
    return LossReport(loss=loss), grads, nll


def bc_loss(policy: GaussianPolicy, states: np.ndarray, actions: np.ndarray):
    """Mean negative log-likelihood of the demonstrated actions."""
    actions = np.asarray(actions, dtype=np.float64)
    states = _check_batch(states, actions.shape[0])
    report, grads, _ = _weighted_nll(policy, states, actions, None)
    return report, grads


def sasaki_loss(
    policy: GaussianPolicy,
    prev_policy: GaussianPolicy,
    states: np.ndarray,
    actions: np.ndarray,
):
    """NLL reweighted by the frozen previous policy's action density.

    Weights are the previous snapshot's densities normalized to batch mean 1
    (computed as exp(lp - max lp) then rescaled, which is the same thing but
    immune to under/overflow). No gradient reaches ``prev_policy``.
    """
    actions = np.asarray(actions, dtype=np.float64)
    states = _check_batch(states, actions.shape[0])
    # max-shifted exponentials keep at least one weight at 1, so the mean
    # normalizer is always >= 1/n and the division is safe
    prev_lp = prev_policy.log_prob_batch(states, actions)
    raw = np.exp(prev_lp - prev_lp.max())
    w = raw / raw.mean()
    report, grads, _ = _weighted_nll(policy, states, actions, w)
    return report, grads


def ileed_loss(
    policy: GaussianPolicy,
    expertise_net: nn.DenseNetwork,
    states: np.ndarray,
    actions: np.ndarray,
    lam_reg: float = DEFAULT_LAM_REG,
):
    """Per-state trust weighting: mean(rho * NLL + lam_reg * (1 - rho)^2).

    rho = sigmoid(expertise_net(s)) in (0,1). Returns
    (report, policy_grads, expertise_grads); both networks train.
    """
    actions = np.asarray(actions, dtype=np.float64)
    states = _check_batch(states, actions.shape[0])
    if expertise_net.out_width != 1:
        raise nn.DimensionError("expertise net must emit a single logit")
    n = states.shape[0]

    raw, e_cache = expertise_net.forward_batch_cached(states)
    rho = 1.0 / (1.0 + np.exp(-raw[:, 0]))

    nll_report, policy_grads, nll = _weighted_nll(policy, states, actions, rho)
    loss = nll_report.loss + lam_reg * float(np.mean((1.0 - rho) ** 2))

    # dloss/drho = (nll - 2*lam*(1-rho))/n, then sigmoid' = rho*(1-rho)
    g_rho = (nll - 2.0 * lam_reg * (1.0 - rho)) / n
    g_raw = (g_rho * rho * (1.0 - rho))[:, None]
    expertise_grads = nn.backward_from_cache(expertise_net, e_cache, g_raw)
    return LossReport(loss=loss), policy_grads, expertise_grads


def expertise_weights(expertise_net: nn.DenseNetwork, states: np.ndarray) -> np.ndarray:
    """The learned per-state trust rho = sigmoid(expertise_net(s))."""
    raw = expertise_net.forward_batch(np.asarray(states, dtype=np.float64))
    return 1.0 / (1.0 + np.exp(-raw[:, 0]))
