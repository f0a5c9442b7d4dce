import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "wncs._core._speedups",
                sources=["src/wncs/_core/_speedups.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install without the compiled core; the pure-Python
    # backend is selected automatically at import.
    ext_modules = []

setup(ext_modules=ext_modules)

# to build the extension in-tree, run `python setup.py build_ext --inplace`
