from setuptools import setup, Extension
from Cython.Build import cythonize

# -ffp-contract=off: no FMA contraction, so the compiled kernel stays
# bit-identical to the pure-Python fallback (rsel._pykernel).
ext = Extension(
    "rsel._ckernel",
    ["src/rsel/_ckernel.pyx"],
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

setup(ext_modules=cythonize(ext, language_level=3))
