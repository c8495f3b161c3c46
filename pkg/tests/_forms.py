"""Small discrete forms (at most 2500 unknowns) shared by the unit tests."""

import numpy as np

from stripspectra import Mesh1D, Mesh2D, SGrid, StripModel, assemble_2d, assemble_effective_1d
from stripspectra._numerics import bump


def bent_model(a=1.0, S=12.0, height=0.5, width=4.0):
    grid = SGrid.spanning(-S, S, 0.01)
    return StripModel.direct(a, grid, lambda s: height * bump(s / (0.5 * width)))


def twisted_model(a=1.0, S=12.0, height=1.0, width=4.0):
    grid = SGrid.spanning(-S, S, 0.01)
    return StripModel.direct(a, grid, 0.0, lambda s: height * bump(s / (0.5 * width)))


def mixed_model(a=0.5, S=12.0):
    grid = SGrid.spanning(-S, S, 0.01)
    return StripModel.direct(a, grid, lambda s: 0.5 * bump(s / 3.0), lambda s: 0.5 * bump(s / 3.0))


def straight_model(a=1.0, S=12.0):
    return StripModel.direct(a, SGrid.spanning(-S, S, 0.01))


def small_forms():
    """Every form size the unit tests eigensolve; all under the dense limit."""
    out = {
        "straight_dirichlet": assemble_2d(straight_model(), Mesh2D(10.0, 1.0, 79, 19)),
        "straight_neumann": assemble_2d(straight_model(), Mesh2D(10.0, 1.0, 59, 15), "neumann"),
        "bent_dirichlet": assemble_2d(bent_model(), Mesh2D(10.0, 1.0, 99, 15)),
        "bent_neumann": assemble_2d(bent_model(), Mesh2D(10.0, 1.0, 99, 15), "neumann"),
        "twisted": assemble_2d(twisted_model(), Mesh2D(8.0, 1.0, 79, 11)),
        "mixed": assemble_2d(mixed_model(), Mesh2D(6.0, 0.5, 119, 15)),
        "effective_1d": assemble_effective_1d(mixed_model(), Mesh1D.symmetric(10.0, 399)),
    }
    for form in out.values():
        assert form.size <= 2500
    return out


def rng(seed=0):
    return np.random.default_rng(seed)
