"""Build hook for the optional compiled search kernel.

The extension is optional: without Cython or a C compiler the package
installs and runs on the pure-Python kernel.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

if cythonize is not None:
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("hgrd.solver._search", ["src/hgrd/solver/_search.pyx"])],
        compiler_directives={"language_level": "3"},
        quiet=True,
    )

setup(ext_modules=ext_modules)
