import os

import numpy
from setuptools import Extension, setup

# The compiled core is optional: without Cython (or with ANIMOVE_NO_EXT=1) the
# package installs with the pure-Python kernels only.
extensions = []
if not os.environ.get("ANIMOVE_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = cythonize(
            [
                Extension(
                    "animove._core",
                    ["src/animove/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "embedsignature": True,
            },
        )

setup(ext_modules=extensions)
