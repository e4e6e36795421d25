from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy as np

# -ffp-contract=off keeps the compiled kernel bit-identical to the pure-Python
# fallback (FMA contraction would change rounding of the accumulation loops).
extensions = [
    Extension(
        "interurn.simulate._kernel",
        ["src/interurn/simulate/_kernel.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
