"""Build script for the optional compiled kernels.

The extension is skipped (with a warning) when Cython or a C compiler is not
available; the package then runs on the numpy fallback.
"""

import logging

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("lpminkowski._kernels", ["src/lpminkowski/_kernels.pyx"],
                   include_dirs=[np.get_include()],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:
    logging.warning("building without compiled kernels: %s", exc)

setup(ext_modules=ext_modules)
