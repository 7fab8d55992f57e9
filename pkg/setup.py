"""Build the optional compiled convolution core.

The extension is skipped when Cython or a C compiler is unavailable; the
package then runs on its numpy fallback.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("KNEEDET_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "kneedet._conv_ext",
                    ["src/kneedet/_conv_ext.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps results bit-identical to the numpy path
                    extra_compile_args=["-O3", "-march=native", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
