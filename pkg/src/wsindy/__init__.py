"""Weak-form sparse equation discovery with noise-bias analytics."""

from .core_data import Dataset, Grid, NoiseSpec, add_noise, make_grid, read_dataset, subsample, write_dataset
from .kernels import BACKEND
from .weaksys import LibrarySpec, WeakSystem, assemble, choose_query_points

__all__ = [
    "BACKEND",
    "Dataset",
    "Grid",
    "LibrarySpec",
    "NoiseSpec",
    "WeakSystem",
    "add_noise",
    "assemble",
    "choose_query_points",
    "make_grid",
    "read_dataset",
    "subsample",
    "write_dataset",
]
