"""Build script: compiles the optional LCS similarity kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), so a failed compile only costs audit throughput.
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
                "fdd._rougecore",
                ["src/fdd/_rougecore.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
