"""Build script: compiles the optional Cython kernels.

The package is fully functional without the extension (a NumPy fallback
is selected at import time), so a failed compile downgrades to a warning
rather than aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "symloc._kernels._ckernels",
                ["src/symloc/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    sys.stderr.write(
        "symloc: Cython extension skipped (%s); using the NumPy fallback kernels\n" % exc
    )

setup(ext_modules=ext_modules)
