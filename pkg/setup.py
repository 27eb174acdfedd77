"""Build the optional compiled kernels.

The package works without them; ``minority_rtb._backend`` falls back to the
numpy implementations when ``minority_rtb._core`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MINORITY_RTB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "minority_rtb._core",
                    ["src/minority_rtb/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
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
