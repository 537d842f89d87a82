"""Build script: compiles the optional Cython kernel extension when possible.

The package is fully functional without the extension (a numpy fallback is
selected at import time). To build the fast kernels in place:

    python setup.py build_ext --inplace

Requires Cython and a C compiler; otherwise this setup degrades to a
pure-Python install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "melbird.kernels._ck",
                sources=["src/melbird/kernels/_ck.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
