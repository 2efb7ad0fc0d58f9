from setuptools import setup, find_packages

setup(
    name="advdenoise",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.22.0",
        "click>=8.0.0",
        "Pillow>=9.0.0",
        "matplotlib>=3.5.0",
        "scikit-image>=0.19.0",
    ],
    extras_require={
        'dev': [
            'pytest>=7.0.0',
            'pytest-cov>=4.0.0',
            'pytest-mock>=3.10.0',
            'black>=22.3.0',
            'isort>=5.10.1',
        ],
    },
    entry_points={
        'console_scripts': [
            'advdenoise=advdenoise.cli.commands:cli',
        ],
    },
    python_requires='>=3.9',
)
