"""Build hook for the optional compiled kernel extension.

The package is pure Python plus one Cython module with the numeric hot loops
(convolution forward/backward, exact distance transform). If Cython is not
available the package still installs and runs on the numpy fallback.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "fundus_xai._kernels._core",
                ["src/fundus_xai/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
