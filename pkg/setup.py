import os
import sys

from setuptools import setup


if sys.version_info < (3, 8, 0):
    raise RuntimeError("ububu requires Python 3.8.0+")


with open(os.path.join(os.path.dirname(__file__), "ububu", "__init__.py")) as f:
    for line in f:
        if line.startswith("__version__ ="):
            _, _, version = line.partition("=")
            VERSION = version.strip(" \n'\"")
            break
    else:
        raise RuntimeError("Unable to read the version from ububu/__init__.py")


with open(os.path.join(os.path.dirname(__file__), "README.md")) as f:
    readme = f.read()


setup(
    name="ububu",
    version=VERSION,
    description="Unbiased multilevel Monte Carlo with coupled kinetic Langevin chains",
    long_description=readme,
    long_description_content_type="text/markdown",
    classifiers=[
        "Environment :: Console",
        "License :: OSI Approved :: MIT License",
        "Intended Audience :: Science/Research",
        "Operating System :: POSIX",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    license="MIT",
    keywords=["mcmc", "langevin", "multilevel", "unbiased", "bayesian"],
    packages=["ububu", "ububu.models", "ububu.config", "ububu.cli"],
    provides=["ububu"],
    python_requires=">=3.8.0",
    install_requires=["numpy>=1.21", "scipy>=1.8", "mpmath>=1.2"],
    extras_require={"test": ["pytest>=7", "hypothesis>=6"]},
    entry_points={"console_scripts": ["ububu = ububu.cli:main"]},
)
