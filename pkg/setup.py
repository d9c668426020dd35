"""Builds the compiled kernel extension.

The package works without it (NumPy fallback kernels), so a missing Cython
toolchain only costs speed.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mapnet.kernels._fast",
                ["src/mapnet/kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
