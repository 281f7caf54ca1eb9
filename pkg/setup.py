"""Build script: compiles the optional speedup extension.

The package works without the extension (a pure-Python fallback is selected
at import time), so any compiler or Cython failure downgrades to a warning
instead of failing the install.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: extension build skipped ({exc}); "
                  "using pure-Python kernels", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); "
                  "using pure-Python kernels", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython unavailable; using pure-Python kernels",
              file=sys.stderr)
        return []
    from setuptools import Extension

    # No -ffast-math and contraction off: the compiled kernels must be
    # bit-identical to the pure-Python fallback.
    ext = Extension(
        "srfmbench._speedups",
        ["src/srfmbench/_speedups.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
