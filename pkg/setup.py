from setuptools import setup, find_packages

setup(
    name="kahler_surface_lab",
    version="1.0.0",
    packages=find_packages(),
    install_requires=[
        'numpy',
        'scipy',
        'pyyaml',
        'tqdm',
        'pytest',
    ],
    python_requires='>=3.10',
)
