from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "replicant.render._rasterizer",
                ["src/replicant/render/_rasterizer.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: the package still installs, the renderer falls back to numpy.
    ext_modules = []

setup(ext_modules=ext_modules)
