"""
Setup configuration for mflab.
"""

from setuptools import setup, find_packages

setup(
    name="mflab",
    version="1.0.0",
    description="Maximum-margin, hierarchical and proximal matrix factorization for ratings and multi-label data",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.11",
    install_requires=[
        "numpy>=1.26",
        "scipy>=1.11",
        "pandas>=2.1",
        "scikit-learn>=1.3",
        "pydantic==2.5.3",
        "pydantic-settings==2.1.0",
        "python-dotenv==1.0.0",
        "pyyaml>=6.0",
    ],
    entry_points={
        "console_scripts": [
            "mf=mflab.experiments.cli:main",
        ],
    },
)
