"""Builds the extension by delegating to cargo; no Rust build backend
is required beyond the toolchain itself."""

import pathlib
import shutil
import subprocess

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

WORKSPACE = pathlib.Path(__file__).resolve().parents[2]


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "tridecon-py"],
            check=True,
            cwd=WORKSPACE,
        )
        built = WORKSPACE / "target" / "release" / "libtridecon.so"
        target = pathlib.Path(self.get_ext_fullpath(ext.name))
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built, target)


setup(
    ext_modules=[Extension("tridecon", sources=[])],
    cmdclass={"build_ext": CargoBuildExt},
)
