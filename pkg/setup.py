import os
from setuptools import setup


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


def requirements(fname):
    return [line.strip() for line in read(fname).splitlines() if line.strip()]


setup(
    name='ksnslab',
    version='1.0.0',
    description='Mild solutions of a Keller-Segel-Navier-Stokes system: '
                'semigroup engines, weighted norms, Picard solver and '
                'numerical checks of the global existence theory',
    url='http://github.com/adnymics/ksnslab',
    author='adnymics',
    author_email='dev@adnymics.com',
    license='GPLv3',
    package_dir={"": "src"},
    packages=["ksnslab"],
    python_requires='>=3.8',
    install_requires=requirements("requirements.txt"),
    setup_requires=[],
    tests_require=['pytest', 'pytest-runner', 'hypothesis'],
    entry_points={
        "console_scripts": ["ksnslab = ksnslab.cli:main"],
    },
    long_description=read("README.rst"),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Software Development :: Libraries :: Python Modules",
    ]
)
