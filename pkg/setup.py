"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a pure NumPy
fallback is selected at import time), so any build failure here is
non-fatal: we simply ship without the compiled core.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "covaropt._kernels._native",
                ["src/covaropt/_kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
