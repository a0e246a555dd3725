import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "counterbc._kernels._ops",
                sources=["src/counterbc/_kernels/_ops.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-funroll-loops"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
else:
    # Pure-python install still works; the kernel package falls back at import.
    extensions = []

setup(ext_modules=extensions)
