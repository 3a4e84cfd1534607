"""Build the optional Cython split-search kernel.

If compilation fails the package still installs and falls back to the
numpy implementation in ``fognow._split_py``.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "fognow._split_cy",
                ["src/fognow/_split_cy.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
