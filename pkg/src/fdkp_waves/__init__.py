"""Fully localised solitary waves of the steady FDKP-I and KP-I equations."""

from .grid_spectral import Field, Grid2D, NormKind, forward_transform, inner_ytilde, inverse_transform, norm, \
    project_zero_xmean
from .lump import LumpParams, lump_oracle_scalars, lump_sample
from .solver import GroundState, SolverConfig, minimize_nehari, petviashvili, solve
from .symbols import SymbolTable, build_table, cone_indicator, eval_m, eval_mtilde

__all__ = [
    "Field", "Grid2D", "NormKind", "forward_transform", "inverse_transform", "inner_ytilde", "norm",
    "project_zero_xmean", "LumpParams", "lump_oracle_scalars", "lump_sample", "GroundState", "SolverConfig",
    "minimize_nehari", "petviashvili", "solve", "SymbolTable", "build_table", "cone_indicator", "eval_m",
    "eval_mtilde",
]
__version__ = "0.1.0"
