"""Offline imitation learning from noisy demonstrations.

Counterfactual behavior cloning plus standard BC, mode-seeking (Sasaki),
and state-expertise (ILEED-style) baselines, trained on a from-scratch dense
network engine; ships desk-scale simulated environments, synthetic noisy
demonstrators, a sweep harness, and a teleoperation service for collecting
human demonstrations.
"""

from counterbc._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
