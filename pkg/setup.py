"""Build script for the compiled propagation kernels.

The pure-Python package works without the extension (qswitch.backend falls
back to the numpy kernels); building it just speeds up the time evolution
loops (see benchmarks/bench_kernels.py for measured figures).
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:  # source tree without Cython: ship pure Python only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "qswitch._kernels",
                ["src/qswitch/_kernels.pyx"],
                # -fcx-limited-range lowers complex multiplies to the naive
                # formula (numpy's semantics) instead of the __muldc3 libcall;
                # the kernels' inner loops are pure complex madds, so the
                # fixup path costs more than the arithmetic.
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
