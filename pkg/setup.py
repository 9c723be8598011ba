"""Builds the optional compiled kernel extension.

The package works without it: latefuse.retrieval falls back to the pure
NumPy kernels when the extension is missing or fails to build.
"""

import numpy as np
from setuptools import setup, Extension

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "latefuse.retrieval._kernels",
                sources=["src/latefuse/retrieval/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
