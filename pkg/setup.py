"""Build the optional Cython kernel extension.

The package works without it (a numpy fallback is selected at import time),
so a failed extension build only costs speed.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "frfsr.kernels._ext",
        ["src/frfsr/kernels/_ext.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
