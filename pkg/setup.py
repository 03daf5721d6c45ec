"""Build script for the optional Cython kernels.

The package works without them: ``tasnn.kernels`` falls back to the numpy
implementation when the compiled module cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("TASNN_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "tasnn._ckernels",
                    [os.path.join("src", "tasnn", "_ckernels.pyx")],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3, "embedsignature": True},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
