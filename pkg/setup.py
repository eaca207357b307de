"""Build the optional compiled kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.  Set LANEWISE_PURE_PYTHON=1
to skip the extension entirely, LANEWISE_NO_NATIVE=1 to drop -march=native.
"""
import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"WARNING: compiled kernels skipped ({exc}); "
                  "falling back to pure-python backend", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "falling back to pure-python backend", file=sys.stderr)


def extensions():
    if os.environ.get("LANEWISE_PURE_PYTHON"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("WARNING: Cython not available; compiled kernels skipped",
              file=sys.stderr)
        return []
    flags = ["-O3", "-ffast-math"]
    if not os.environ.get("LANEWISE_NO_NATIVE"):
        flags.append("-march=native")
    ext = Extension(
        "lanewise._kernels",
        ["src/lanewise/_kernels.pyx"],
        extra_compile_args=flags,
        libraries=["m"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
