"""Build script for the optional compiled kernels.

The Cython extension is optional: if it cannot be compiled, the package
falls back to the pure-Python kernels in ``predcacc._pykernels``.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("PREDCACC_NO_EXT") != "1":
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
                    "predcacc._kernels",
                    ["src/predcacc/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
