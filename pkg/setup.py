"""Build the optional Cython kernels.

The package works without them: ``orthokd._backend`` falls back to
``orthokd._fallback`` when the extension cannot be imported.  Set
``ORTHOKD_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ORTHOKD_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "orthokd._kernels",
                    ["src/orthokd/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: the accumulation order must match the
                    # numpy fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
