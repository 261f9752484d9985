"""Maxwell cavity eigenvalues with tensor neural network field bases."""

__version__ = "0.1.0"
