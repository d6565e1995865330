"""Build script for the optional compiled kernel extension.

The package works without the extension (pure-numpy fallback is selected at
import time); building it just makes the training hot loop faster.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "pxre.kernels._fast",
        sources=["src/pxre/kernels/_fast.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
