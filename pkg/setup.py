"""Builds the optional compiled metric kernels.

The package is fully functional without the extension: ``explainkit.metrics``
falls back to the pure-Python kernels when the compiled module is missing.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "explainkit.metrics._kernels",
                ["src/explainkit/metrics/_kernels.pyx"],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
