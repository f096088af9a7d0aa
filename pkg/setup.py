"""Build script for the optional compiled kernels.

The package works without them: if Cython or a C compiler is missing, or the
build fails, ``stemcalyx._backend`` falls back to the numpy kernels.

    pip install -e . --no-build-isolation
    python setup.py build_ext --inplace   # rebuild the extension only
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "stemcalyx._kernels",
        ["src/stemcalyx/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # no FMA contraction: results must match the numpy kernels bit for bit
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
