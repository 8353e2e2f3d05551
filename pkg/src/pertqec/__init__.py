"""Perturbative error-correction toolkit: Kraus power series, Knill-Laflamme
checks on first-order errors, and the Delta correctability estimator."""

__version__ = "0.1.0"
