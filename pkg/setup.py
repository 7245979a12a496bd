from setuptools import setup, find_packages
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, "README.md"), encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="rvm_lab",
    version="0.1.0",
    description="desk-scale numerical lab for the relativistic Vlasov-Maxwell system",
    license="MIT",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["examples*"]),
    package_data={"rvm_lab.data": ["*.json"]},
    install_requires=[
        "numpy>=1.17.4",
        "pandas>=0.25.3",
        "scikit-learn>=0.21.3",
        "scipy>=1.7.0",
    ],  # external packages as dependencies
    extras_require={"test": ["pytest>=6.0.1", "hypothesis>=5.0"]},
    entry_points={"console_scripts": ["rvm-lab=rvm_lab.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
    ],
    python_requires=">=3.7",
)
