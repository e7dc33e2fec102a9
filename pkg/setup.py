import os

import numpy as np
from setuptools import Extension, setup

# XCONFLICT_NO_EXT=1 installs the pure-Python kernels only
extensions = []
if not os.environ.get("XCONFLICT_NO_EXT"):
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "xconflict._ckernels",
                ["src/xconflict/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native", "-fno-fast-math", "-ffp-contract=off"],
            )
        ],
        language_level="3",
    )

setup(ext_modules=extensions)
