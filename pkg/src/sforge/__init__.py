"""Exact engine for sunflower-free extremal set theory.

Bitmask set families, spreadness / homogeneity / globalness certification,
structural decomposition pipelines, extremal constructions, and desk-scale
bound verification, all over exact rational arithmetic.
"""

__version__ = "0.1.0"
