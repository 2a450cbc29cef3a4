import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled core; the numpy kernels take over
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("RBMFLOCK_NO_EXT"):
    extensions = cythonize(
        [
            Extension(
                "rbmflock._core",
                ["src/rbmflock/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
