"""Regularisation of ODEs by irregular paths through averaging operators."""

__version__ = "0.1.0"
