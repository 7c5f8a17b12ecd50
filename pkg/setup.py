"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python backend is selected
at import time), so the build degrades gracefully when Cython or a C
compiler is unavailable.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "peergrade._kernels._core",
                ["src/peergrade/_kernels/_core.pyx"],
                # -ffp-contract=off: keep float semantics identical to the
                # pure backend (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
