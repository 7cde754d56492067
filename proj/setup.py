"""Build shim: drive the repository's CMake build for the extension module.

``pip install .`` (use ``--no-build-isolation`` so the installed pybind11 is
found) configures a CMake build of just the compiled core and the ``_ebrns``
extension, then drops the built module inside the ``ebrns`` package. The
pure-Python package layout is declared in ``pyproject.toml``.
"""

import os
import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        configure = [
            "cmake",
            "-S",
            str(source_dir),
            "-B",
            str(build_dir),
            "-DCMAKE_BUILD_TYPE=Release",
            "-DEBRNS_BUILD_TESTS=OFF",
            f"-DPython3_EXECUTABLE={sys.executable}",
        ]
        try:
            import pybind11

            configure.append(f"-Dpybind11_DIR={pybind11.get_cmake_dir()}")
        except ImportError:
            pass
        subprocess.run(configure, check=True)
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_ebrns", "-j"],
            check=True,
        )

        built = sorted(build_dir.glob("_ebrns*.so")) or sorted(build_dir.glob("**/_ebrns*.so"))
        if not built:
            raise RuntimeError("CMake build produced no _ebrns extension module")
        target = Path(self.get_ext_fullpath(ext.name))
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[0], target)


setup(
    ext_modules=[CMakeExtension("ebrns._ebrns")],
    cmdclass={"build_ext": CMakeBuild},
)
