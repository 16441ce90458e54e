"""Homogenization-rate laboratory for two coercive nonconvex Hamilton-Jacobi
examples: game simulation, monotone PDE solvers and effective-Hamiltonian
audits."""

from ._jit import backend_name
from .effective import EffectiveHTable, convexity_check, h_formula, hbar_estimate, hbar_formula_3d
from .engine import (PreconditionError, corrector_game, integrate, lower_value_estimate,
                     upper_value_estimate)
from .games import make_game_2d, make_game_3d, u0
from .policies import PolicyI, PolicyII
from .torus import BumpProfile, experiments_profile, paper_profile

__version__ = "0.1.0"
