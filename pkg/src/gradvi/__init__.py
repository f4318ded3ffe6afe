"""Solvers and checks for variational inequalities with gradient constraints."""

__version__ = "0.1.0"
