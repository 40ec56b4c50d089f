"""High-order Nystrom volume-integral-equation solver for electromagnetic
scattering by dielectric cubes."""

__version__ = "0.1.0"
