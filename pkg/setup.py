import os

from setuptools import find_packages, setup

from spatiotemporal_pauli_noise import get_version

HERE = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(HERE, "README.rst"), encoding="utf-8") as f:
    LONG_DESCRIPTION = f.read()

setup(
    name="spatiotemporal-pauli-noise",
    version=get_version(),
    description="Spatiotemporal Pauli processes from system-environment dynamics and correlated QEC noise",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/x-rst",
    packages=find_packages(exclude=["tests*"]),
    include_package_data=True,
    install_requires=[
        "django>=4.2,<6.1",
        "numpy>=1.24,<3.0",
        "scipy>=1.10,<2.0",
        "networkx>=3.0,<4.0",
        "stim>=1.12",
    ],
    extras_require={
        "test": [
            "openwisp-utils[qa]~=1.2.2",
            "pytest-django",
        ],
    },
    entry_points={
        "console_scripts": [
            "spp-noise = spatiotemporal_pauli_noise.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    keywords="quantum error correction correlated noise process tensor pauli twirl surface code",
    python_requires=">=3.10",
    zip_safe=False,
)
