"""Build script: compiles the optional Cython convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile is downgraded to a warning.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "forgelens.autodiff.kernels._convolve",
                ["src/forgelens/autodiff/kernels/_convolve.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"forgelens: skipping Cython extension build ({exc})\n")

setup(ext_modules=ext_modules)
