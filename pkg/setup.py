"""Builds the optional compiled kernels.

The package works without the extension (a numpy fallback is selected at
import time); a failed extension build downgrades to a pure-Python install
instead of aborting.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken toolchain
            sys.stderr.write(f"warning: compiled kernels skipped ({exc}); "
                             "using the pure-Python fallback\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            sys.stderr.write(f"warning: building {ext.name} failed ({exc}); "
                             "using the pure-Python fallback\n")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "rcagraph._kernels",
        ["src/rcagraph/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
