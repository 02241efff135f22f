"""H(div) mixed finite elements with divergence-free supplements on hexahedra."""

__version__ = "0.1.0"
