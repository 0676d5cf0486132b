import numpy
from setuptools import setup
from setuptools.extension import Extension

# The compiled flow kernel is optional: the package falls back to the
# vectorized numpy implementation when the extension is missing.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "geoxray._flowcore",
                ["src/geoxray/_flowcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
