"""Word lattices."""
from .lattice import Lattice, LatticeValidationError, Link, read_lattice, split_links, write_lattice
from .backward import BackwardTable, backward_pass

__all__ = [
    "Lattice",
    "LatticeValidationError",
    "Link",
    "read_lattice",
    "split_links",
    "write_lattice",
    "BackwardTable",
    "backward_pass",
]
