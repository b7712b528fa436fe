"""Build script: compiles the optional Q-network math kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed cythonize/compile must not break installation.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                name="adaptq._qnet_core",
                sources=["src/adaptq/_qnet_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
