from setuptools import setup, find_packages

setup(
    name="switchlq",
    version="0.1.0",
    description="Riccati solvers, stability checks and turnpike experiments for regime-switching LQ control",
    author="switchlq Team",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
    ],
    entry_points={
        "console_scripts": [
            "switchlq=switchlq.cli.main:main",
        ],
    },
    package_data={
        "switchlq": [
            "cli/USAGE.md",
            "utils/USAGE.md",
        ],
    },
)
