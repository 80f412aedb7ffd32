"""Build script for the optional compiled conv1d kernels.

The extension is a pure speedup: if Cython or a C compiler is unavailable the
install proceeds and the package falls back to the numpy kernels at import.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "msuda.nn._convkernels",
                ["src/msuda/nn/_convkernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
