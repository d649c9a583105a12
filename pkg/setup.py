import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are an optional speedup; the package falls back to the
# numpy implementation in echelonrl.kernels.pyref when the extension is absent.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "echelonrl.kernels._cyops",
                ["src/echelonrl/kernels/_cyops.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
