"""symloc: numerical nonabelian localization on explicit Hamiltonian spaces."""

__version__ = "0.1.0"
