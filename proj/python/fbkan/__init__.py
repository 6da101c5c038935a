"""Finite-basis Kolmogorov-Arnold networks.

Thin Python layer over the C++ core: spline evaluation, partition-of-unity
weights, training runs from presets, and evaluation of trained checkpoints.
"""

from fbkan._core import (
    basis_values,
    evaluate,
    jet,
    pou_weights,
    problem_names,
    run,
    sweep,
)

__all__ = [
    "basis_values",
    "evaluate",
    "jet",
    "pou_weights",
    "problem_names",
    "run",
    "sweep",
]
