from setuptools import setup, find_packages

setup(
    name="pycasetime",
    version="0.1.0",
    description="Surgical case duration prediction with regression trees, random forests and AdaBoost.R2",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    author="puterjam",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"pycasetime": ["REPORT_FORMAT.md"]},
    install_requires=[
        "numpy",
        "pandas>=1.5",
        "scipy>=1.7",
        "pydantic>=2",
        "PyYAML",
        "joblib",
    ],
    extras_require={
        "test": ["pytest", "hypothesis"],
    },
    entry_points={
        "console_scripts": [
            "pycasetime=pycasetime.cli:main",
        ],
    },
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
