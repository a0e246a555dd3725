"""Kernel backend selection for the dense-network hot path.

The compiled Cython extension (``_ops``) is preferred when it was built;
otherwise the numpy implementation (``python_ops``) is used. Override with
the ``COUNTERBC_KERNELS`` environment variable set to ``python``,
``compiled``, or ``auto`` (default). ``benchmarks/bench_kernels.py`` compares
the two.

The selected backend is fixed at import time, so repeated runs inside one
process are bit-reproducible. The two backends agree to roundoff but not
bit-exactly (matrix products accumulate in different orders), so pin the
backend when byte-identical outputs across machines matter.
"""

from __future__ import annotations

import os

from counterbc._kernels import python_ops

try:
    from counterbc._kernels import _ops as compiled_ops
except ImportError:
    compiled_ops = None

_requested = os.environ.get("COUNTERBC_KERNELS", "auto")
if _requested == "python":
    ops = python_ops
elif _requested == "compiled":
    if compiled_ops is None:
        raise ImportError(
            "COUNTERBC_KERNELS=compiled but the counterbc._kernels._ops "
            "extension is not built; run pip install to compile it"
        )
    ops = compiled_ops
elif _requested == "auto":
    ops = compiled_ops if compiled_ops is not None else python_ops
else:
    raise ValueError(
        f"COUNTERBC_KERNELS must be 'python', 'compiled', or 'auto', got {_requested!r}"
    )

BACKEND = "compiled" if ops is compiled_ops else "python"

__all__ = ["ops", "BACKEND", "python_ops", "compiled_ops"]
