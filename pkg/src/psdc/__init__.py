"""Structured divide-and-conquer eigensolver for symmetric tridiagonal matrices."""

from .cauchy import CauchyLike, LowRankFactor, example0, srrsc_compress
from .gridsim import BlockCyclicLayout, DistMatrix, Grid, GridStats, redistribute, run_grid, shift_left
from .matrices import (
    EigenDecomposition,
    TridiagonalMatrix,
    accuracy,
    dense_eig_oracle,
    make_clement,
    make_hermite,
    make_matrix,
    make_sht,
    make_toeplitz_type,
)
from .psmma import PsmmaVariant, baseline_dense_multiply, psmma_multiply
from .secular import deflate, qhat_generators, solve_secular
from .solver import MergeRecord, PsdcConfig, psdc_solve

__all__ = [
    "BlockCyclicLayout",
    "CauchyLike",
    "DistMatrix",
    "EigenDecomposition",
    "Grid",
    "GridStats",
    "LowRankFactor",
    "MergeRecord",
    "PsdcConfig",
    "PsmmaVariant",
    "TridiagonalMatrix",
    "accuracy",
    "baseline_dense_multiply",
    "deflate",
    "dense_eig_oracle",
    "example0",
    "make_clement",
    "make_hermite",
    "make_matrix",
    "make_sht",
    "make_toeplitz_type",
    "psdc_solve",
    "psmma_multiply",
    "qhat_generators",
    "redistribute",
    "run_grid",
    "shift_left",
    "solve_secular",
    "srrsc_compress",
]
