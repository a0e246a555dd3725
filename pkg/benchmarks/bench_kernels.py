"""Timing comparison of the compiled and numpy kernel backends.

Runs the three hot-path ops (cached forward, backward-from-cache, fused
Adam update) over a small grid of layer shapes, then a short end-to-end
training loop with each backend. The numpy path delegates its matrix
products to BLAS, so the compiled extension is not automatically faster
on wide layers; this script reports whatever is true on the host.

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import os
import time

import numpy as np

from counterbc._kernels import compiled_ops, python_ops


def _layers(state_dim, hidden, out_dim, rng):
    widths = [state_dim, hidden, hidden, out_dim]
    weights = [
        np.ascontiguousarray(rng.standard_normal((widths[i], widths[i + 1])) * 0.1)
        for i in range(3)
    ]
    biases = [np.zeros(widths[i + 1]) for i in range(3)]
    return weights, biases


def time_op(fn, repeats):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_shapes(ops, batch, hidden, repeats, rng):
    weights, biases = _layers(4, hidden, 2, rng)
    x = np.ascontiguousarray(rng.standard_normal((batch, 4)))
    out, acts, masks = ops.forward_cached(weights, biases, x)
    gout = np.ascontiguousarray(rng.standard_normal(out.shape))
    fwd = time_op(lambda: ops.forward_cached(weights, biases, x), repeats)
    bwd = time_op(
        lambda: ops.backward_from_cache(weights, acts, masks, gout), repeats
    )
    p = rng.standard_normal(hidden * hidden)
    g = rng.standard_normal(hidden * hidden)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    adam = time_op(
        lambda: ops.adam_update(p, g, m, v, 3, 1e-3, 0.9, 0.999, 1e-8), repeats
    )
    return fwd, bwd, adam


def bench_end_to_end(backend_name):
    """Train a small BC policy in a subprocess-free way: re-exec via env var."""
    import subprocess
    import sys

    code = (
        "import numpy as np, time;"
        "from counterbc import demonstrators as demo, trainer;"
        "from counterbc.envs import make_env;"
        "env = make_env('cartpole');"
        "ds = demo.generate_dataset(env, demo.OptimalTeacher('cartpole'),"
        " demo.NoiseModel('uniform', 0.5), 400, np.random.default_rng(0));"
        "cfg = trainer.TrainConfig(loss='bc', epochs=30, hidden=64, seed=0);"
        "t0 = time.perf_counter();"
        "trainer.train(ds, env.action_spec, cfg);"
        "print(time.perf_counter() - t0)"
    )
    env = dict(os.environ, COUNTERBC_KERNELS=backend_name)
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    backends = [("python", python_ops)]
    if compiled_ops is not None:
        backends.append(("compiled", compiled_ops))
    else:
        print("compiled extension not built; benchmarking the numpy backend only")

    rng = np.random.default_rng(0)
    print(f"{'shape':>18s} " + " ".join(f"{n:>10s}" for n, _ in backends))
    for batch, hidden in [(64, 64), (64, 256), (256, 256)]:
        rows = {
            name: bench_shapes(ops, batch, hidden, args.repeats, rng)
            for name, ops in backends
        }
        for i, op in enumerate(["forward", "backward", "adam"]):
            label = f"b{batch} h{hidden} {op}"
            cells = " ".join(f"{rows[n][i] * 1e6:9.1f}u" for n, _ in backends)
            print(f"{label:>18s} {cells}")

    print("\nend-to-end (30-epoch BC train, 400 pairs, h=64):")
    for name, _ in backends:
        print(f"  {name:>9s}: {bench_end_to_end(name):.2f}s")


if __name__ == "__main__":
    main()
