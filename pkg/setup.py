import os

from setuptools import Extension, setup

PYX = "src/symfuse/verifier/_core.pyx"

ext_modules = []
if not os.environ.get("SYMFUSE_PURE_PYTHON") and os.path.exists(PYX):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "symfuse.verifier._core",
                    [PYX],
                    extra_compile_args=["-O2"],
                    language="c++",
                )
            ],
            language_level="3",
        )
    except ImportError:
        # No Cython: install the pure-Python engine only.
        ext_modules = []

setup(ext_modules=ext_modules)
