"""Build script for the compiled kernel lane.

The extension is optional: if Cython or a C compiler is unavailable the
install still succeeds and the package falls back to the numpy lane at
import time (see eadt._backend).
"""

import os
import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


def _extensions():
    if os.environ.get("EADT_PURE_PYTHON"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython/numpy not importable at build time; "
                      "skipping the compiled kernel lane")
        return []
    ext = Extension(
        "eadt._kernels",
        ["src/eadt/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


class OptionalBuildExt(build_ext):
    """Builds extensions but never fails the install over them."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"compiled kernels unavailable ({exc}); "
                          "the numpy lane will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"failed to build {ext.name} ({exc}); "
                          "the numpy lane will be used")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
