import os

from setuptools import Extension, setup

# The compiled Jacobi kernel is an optimization, not a requirement: the
# package falls back to the pure-NumPy implementation at import time if the
# extension is missing. Set SPECMIX_PURE_PYTHON=1 to skip building it.
ext_modules = []
if os.environ.get("SPECMIX_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("specmix._jacobi_c", ["src/specmix/_jacobi_c.pyx"])],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
