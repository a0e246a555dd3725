"""Gaussian policy density, sampling, and head gradients.

Density values are frozen from the closed form
log p = -0.5*((a-mu)/sigma)^2 - log sigma - 0.5*log(2*pi) per dimension.
"""

import math

import numpy as np
import pytest

from counterbc import nn, policy as pol


def _policy(seed=0, state_dim=3, action_dim=2, hidden=8):
    return pol.make_policy(
        state_dim,
        action_dim,
        action_low=-np.ones(action_dim),
        action_high=np.ones(action_dim),
        hidden=hidden,
        rng=np.random.default_rng(seed),
    )


# ---------------------------------------------------------------------------
# density


def test_standard_normal_at_mean():
    p = pol.constant_policy(mean=[0.0], log_std=[0.0])
    # -0.5*log(2*pi)
    assert p.log_prob(np.zeros(1), np.zeros(1)) == pytest.approx(
        -0.9189385332046727, abs=1e-12
    )


def test_standard_normal_two_sigma():
    p = pol.constant_policy(mean=[0.0], log_std=[0.0])
    assert p.log_prob(np.zeros(1), np.array([2.0])) == pytest.approx(
        -2.9189385332046727, abs=1e-12
    )


def test_density_with_nonunit_sigma():
    # a=1, mu=0.5, sigma=0.5: z=1, log p = -0.5 + log 2 - 0.5*log(2*pi)
    p = pol.constant_policy(mean=[0.5], log_std=[math.log(0.5)])
    assert p.log_prob(np.zeros(1), np.array([1.0])) == pytest.approx(
        -0.7257913526447274, abs=1e-12
    )


def test_density_sums_over_dimensions():
    p = pol.constant_policy(mean=[0.0, 0.0], log_std=[0.0, 0.0])
    assert p.log_prob(np.zeros(1), np.zeros(2)) == pytest.approx(
        2 * -0.9189385332046727, abs=1e-12
    )


def test_log_prob_batch_matches_single():
    p = _policy(seed=3)
    rng = np.random.default_rng(4)
    states = rng.normal(size=(10, 3))
    actions = rng.normal(size=(10, 2))
    batch = p.log_prob_batch(states, actions)
    for i in range(10):
        assert batch[i] == pytest.approx(p.log_prob(states[i], actions[i]), rel=1e-12)


def test_density_integrates_to_one():
    p = pol.constant_policy(mean=[0.3], log_std=[math.log(0.7)])
    grid = np.linspace(0.3 - 8 * 0.7, 0.3 + 8 * 0.7, 20001)
    dens = np.exp(p.log_prob_batch(np.zeros((grid.size, 1)), grid[:, None]))
    mass = np.trapezoid(dens, grid)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_density_peaks_at_mean():
    p = _policy(seed=5)
    s = np.array([0.2, -0.4, 0.9])
    mu = p.head(s).mean
    grid = np.linspace(-3, 3, 301)
    best = None
    for a0 in grid:
        for a1 in grid[::10]:
            lp = p.log_prob(s, np.array([a0, a1]))
            if best is None or lp > best[0]:
                best = (lp, a0, a1)
    lp_mu = p.log_prob(s, mu)
    assert lp_mu >= best[0]


# ---------------------------------------------------------------------------
# clamping


def test_log_std_clamped_both_sides():
    p = pol.constant_policy(mean=[0.0], log_std=[10.0])
    assert p.head(np.zeros(1)).log_std[0] == 2.0
    p = pol.constant_policy(mean=[0.0], log_std=[-10.0])
    assert p.head(np.zeros(1)).log_std[0] == -5.0


def test_clamp_mask_zero_outside_range():
    p = pol.constant_policy(mean=[0.0, 0.0], log_std=[10.0, 0.5])
    _, log_std, mask, _ = p.head_batch_cached(np.zeros((1, 1)))
    assert log_std[0, 0] == 2.0 and mask[0, 0] == 0.0
    assert log_std[0, 1] == 0.5 and mask[0, 1] == 1.0


# ---------------------------------------------------------------------------
# sampling and deterministic action


def test_sample_moments():
    p = pol.constant_policy(mean=[1.5], log_std=[math.log(0.5)])
    rng = np.random.default_rng(0)
    draws = np.array([p.sample(np.zeros(1), rng)[0] for _ in range(20000)])
    assert draws.mean() == pytest.approx(1.5, abs=0.02)
    assert draws.std() == pytest.approx(0.5, abs=0.02)


def test_sample_is_not_clipped():
    p = pol.constant_policy(
        mean=[2.0], log_std=[-5.0], action_low=[-1.0], action_high=[1.0]
    )
    a = p.sample(np.zeros(1), np.random.default_rng(1))
    assert a[0] > 1.5  # far outside the bounds, clipping happens downstream


def test_mean_action_is_clipped():
    p = pol.constant_policy(
        mean=[2.0, -0.3], log_std=[0.0, 0.0], action_low=[-1.0, -1.0], action_high=[1.0, 1.0]
    )
    a = p.mean_action(np.zeros(1))
    assert np.array_equal(a, np.array([1.0, -0.3]))


def test_entropy_closed_form():
    # 0.5*log(2*pi*e) per unit-sigma dimension
    p = pol.constant_policy(mean=[0.0], log_std=[0.0])
    assert p.entropy(np.zeros(1)) == pytest.approx(1.4189385332046727, abs=1e-12)
    p2 = pol.constant_policy(mean=[0.0, 0.0], log_std=[math.log(2.0), 0.0])
    assert p2.entropy(np.zeros(1)) == pytest.approx(
        2 * 1.4189385332046727 + math.log(2.0), abs=1e-12
    )


# ---------------------------------------------------------------------------
# head gradients


def _oracle_head_loss(backbone, states, c_mu, c_ls, da):
    h = states
    for i, (w, b) in enumerate(zip(backbone.weights, backbone.biases)):
        h = h @ w.T + b
        if i < len(backbone.weights) - 1:
            h = np.maximum(h, 0.0)
    mu = h[:, :da]
    ls = np.clip(h[:, da:], pol.LOG_STD_MIN, pol.LOG_STD_MAX)
    return float(np.sum(mu * c_mu) + np.sum(ls * c_ls))


def test_head_backward_finite_differences():
    p = _policy(seed=8, state_dim=2, action_dim=2, hidden=6)
    rng = np.random.default_rng(9)
    states = rng.normal(size=(4, 2))
    c_mu = rng.normal(size=(4, 2))
    c_ls = rng.normal(size=(4, 2))

    _, _, mask, cache = p.head_batch_cached(states)
    grads = p.head_backward(cache, c_mu, c_ls * mask)

    step = 1e-5
    net = p.backbone
    for layer in range(len(net.weights)):
        for which in ("w", "b"):
            arr = net.weights[layer] if which == "w" else net.biases[layer]
            an_arr = grads.weights[layer] if which == "w" else grads.biases[layer]
            for idx in range(arr.size):
                for sign, store in ((-1, "lo"), (1, "hi")):
                    clone = net.copy()
                    tgt = clone.weights[layer] if which == "w" else clone.biases[layer]
                    tgt.flat[idx] += sign * step
                    val = _oracle_head_loss(clone, states, c_mu, c_ls, 2)
                    if store == "lo":
                        lo = val
                    else:
                        hi = val
                fd = (hi - lo) / (2 * step)
                an = an_arr.flat[idx]
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
                assert rel < 1e-4, f"layer {layer} {which}[{idx}]"


def test_clamped_log_std_gets_no_gradient():
    # raw log-std far above the clamp: bias gradient for that output is zero
    p = pol.constant_policy(mean=[0.0], log_std=[10.0])
    states = np.zeros((3, 1))
    _, _, mask, cache = p.head_batch_cached(states)
    assert np.all(mask == 0.0)
    grads = p.head_backward(cache, np.zeros((3, 1)), np.ones((3, 1)) * mask)
    assert np.array_equal(grads.biases[-1], np.zeros(2))


# ---------------------------------------------------------------------------
# validation and serialization


def test_backbone_width_must_match_action_dim():
    net = nn.glorot_init((3, 3), np.random.default_rng(0))
    with pytest.raises(nn.DimensionError):
        pol.GaussianPolicy(
            backbone=net, action_dim=2, action_low=-np.ones(2), action_high=np.ones(2)
        )


def test_log_prob_rejects_wrong_action_shape():
    p = _policy()
    with pytest.raises(nn.DimensionError):
        p.log_prob(np.zeros(3), np.zeros(3))


def test_checkpoint_round_trip(tmp_path):
    p = _policy(seed=42)
    p.meta["env"] = "demo"
    path = tmp_path / "policy.json"
    pol.save_policy(p, path)
    q = pol.load_policy(path)
    assert q.action_dim == p.action_dim
    assert q.meta == {"env": "demo"}
    assert np.array_equal(q.action_low, p.action_low)
    rng = np.random.default_rng(7)
    states = rng.normal(size=(5, 3))
    actions = rng.normal(size=(5, 2))
    assert np.array_equal(
        p.log_prob_batch(states, actions), q.log_prob_batch(states, actions)
    )


def test_checkpoint_rejects_bad_version_or_kind():
    p = _policy()
    doc = pol.policy_to_dict(p)
    bad = dict(doc, format_version=99)
    with pytest.raises(ValueError):
        pol.policy_from_dict(bad)
    bad = dict(doc, kind="something_else")
    with pytest.raises(ValueError):
        pol.policy_from_dict(bad)
