"""Quantum spatial search by flip-flop quantum walk on fractal lattices."""

__version__ = "0.1.0"
