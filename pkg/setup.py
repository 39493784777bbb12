"""Build the optional Cython kernel; the package works without it."""
import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("CLAD_NO_EXTENSION"):
    ext_modules = cythonize(
        [
            Extension(
                "clad._pairloss",
                ["src/clad/_pairloss.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
