import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Compiled hot path: tag-stream pairing, delay histogramming and dead-time
# filtering.  Everything else is numpy; a pure-python fallback with the same
# semantics lives in sagnacsim/_kernels/fallback.py.
extensions = [
    Extension(
        "sagnacsim._kernels._corex",
        ["src/sagnacsim/_kernels/_corex.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
