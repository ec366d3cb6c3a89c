"""Build the optional Cython kernels.

The package works without them: ``pathloss_aug._core`` falls back to numpy
implementations when ``pathloss_aug._kernels`` cannot be imported.
"""
import sys

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: Cython kernels not built ({exc}); using numpy fallback",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    compile_args = ["-O3", "-ffp-contract=off", "-fno-fast-math", "-fopenmp"]
    link_args = ["-fopenmp"]
    if sys.platform == "darwin":
        compile_args = ["-O3", "-ffp-contract=off"]
        link_args = []
    ext = Extension(
        "pathloss_aug._kernels",
        ["src/pathloss_aug/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
