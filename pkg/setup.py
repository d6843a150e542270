"""Build script for the optional compiled allocation kernel.

The package works without the extension: torsim.sim.allocation falls back to
the pure-Python kernel if the compiled one is missing. Build with:

    pip install -e . --no-build-isolation
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/torsim/sim/_alloc_cy.pyx"],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
