"""Build script: compiles the optional Cython simulation kernel.

The package works without the extension (a pure-numpy loop is selected at
import time), so a failed compile only costs speed. Set LAGCSIM_NO_EXT=1 to
skip the build entirely.
"""

import os

from setuptools import setup
from setuptools.errors import CCompilerError, ExecError, PlatformError

ext_modules = []
if not os.environ.get("LAGCSIM_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "lagcsim._core",
                    ["src/lagcsim/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("lagcsim: Cython/numpy unavailable at build time; "
              "installing with the pure-python backend only")

try:
    setup(ext_modules=ext_modules)
except (CCompilerError, ExecError, PlatformError):
    print("lagcsim: extension build failed; retrying without the compiled core")
    setup(ext_modules=[])
